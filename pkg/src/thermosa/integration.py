"""Synthetic-aperture image integration over waypoint grids.

Images captured at the waypoints of a synthetic aperture are projected
onto the (flat) ground plane, back-projected into the central waypoint's
perspective, and averaged per pixel. Pixels that a reprojected sample does
not cover are excluded from that pixel's average (no zero-padding), so the
integral divides by the per-pixel count of contributing samples rather
than by the waypoint count. Larger capture grids are integrated with a
sliding aperture window.

Geometry: pinhole cameras, nadir-looking, positioned in ENU meters with
altitude above a ground plane of constant height. Image axes: column u
grows east, row v grows south (for zero yaw); yaw rotates the footprint
counterclockwise (viewed from above).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .raster import TemperatureRaster, bilinear_sample

# Footprint of 22 m from 35 m AGL; the SA defaults below reproduce an
# 11 x 11 grid with 2 m waypoint spacing at that altitude.
DEFAULT_FOV_DEG = 2.0 * math.degrees(math.atan(11.0 / 35.0))
DEFAULT_ALTITUDE_M = 35.0
DEFAULT_SPACING_M = 2.0
DEFAULT_N = 11
DEFAULT_RESOLUTION = 512


@dataclass(frozen=True)
class CameraPose:
    """Nadir pinhole camera: ENU position, yaw, and square-pixel intrinsics."""

    position: tuple[float, float, float]  # x east, y north, altitude AGL (m)
    yaw_deg: float = 0.0
    fov_deg: float = DEFAULT_FOV_DEG
    width: int = DEFAULT_RESOLUTION
    height: int = DEFAULT_RESOLUTION

    def __post_init__(self):
        if not self.position[2] > 0:
            raise ParameterError("camera altitude must be positive")
        if not 0 < self.fov_deg < 180:
            raise ParameterError("fov_deg must be in (0, 180)")
        if self.width < 1 or self.height < 1:
            raise ParameterError("camera resolution must be positive")

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(math.radians(self.fov_deg) / 2.0)

    @property
    def principal(self) -> tuple[float, float]:
        return ((self.width - 1) / 2.0, (self.height - 1) / 2.0)

    def ground_sample_distance(self, ground_height_m: float = 0.0) -> float:
        """Meters of ground per pixel at the given ground height."""
        return (self.position[2] - ground_height_m) / self.focal_px


def project_to_ground(pose: CameraPose, pixel, ground_height_m: float = 0.0):
    """Intersect the viewing ray of continuous pixel (u, v) with the ground.

    Accepts scalars or arrays; returns ground (x, y) in meters. The ray of
    a nadir camera always reaches the ground so no projection error can
    occur here; the guard stays for non-degenerate altitude input.
    """
    u, v = pixel
    dz = pose.position[2] - ground_height_m
    if dz <= 0:
        raise ParameterError("ground plane at or above the camera")
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    cx, cy = pose.principal
    k = dz / pose.focal_px
    ox = (u - cx) * k
    oy = -(v - cy) * k
    yaw = math.radians(pose.yaw_deg)
    c, s = math.cos(yaw), math.sin(yaw)
    x = pose.position[0] + c * ox - s * oy
    y = pose.position[1] + s * ox + c * oy
    if x.ndim == 0:
        return float(x), float(y)
    return x, y


def backproject_to_center(ground_xy, pose: CameraPose, ground_height_m: float = 0.0):
    """Pixel coordinates in `pose` of ground points; NaN outside the frustum.

    Exact inverse of project_to_ground for the same pose. Points whose
    image coordinates fall outside [-0.5, size - 0.5] are marked
    out-of-frame with NaN.
    """
    x, y = ground_xy
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dz = pose.position[2] - ground_height_m
    if dz <= 0:
        raise ParameterError("ground plane at or above the camera")
    ox = x - pose.position[0]
    oy = y - pose.position[1]
    yaw = math.radians(pose.yaw_deg)
    c, s = math.cos(yaw), math.sin(yaw)
    rx = c * ox + s * oy
    ry = -s * ox + c * oy
    cx, cy = pose.principal
    k = pose.focal_px / dz
    u = cx + rx * k
    v = cy - ry * k
    in_frame = (
        (u >= -0.5) & (u <= pose.width - 0.5) & (v >= -0.5) & (v <= pose.height - 0.5)
    )
    u = np.where(in_frame, u, np.nan)
    v = np.where(in_frame, v, np.nan)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


@dataclass(frozen=True)
class SAGrid:
    """Synthetic-aperture waypoint layout: n x m grid (m = 1 for a strip)."""

    n: int = DEFAULT_N
    m: int = DEFAULT_N
    spacing_m: float = DEFAULT_SPACING_M
    altitude_agl_m: float = DEFAULT_ALTITUDE_M
    center_xy: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ParameterError("grid needs n >= 1 and m >= 1")
        if not self.spacing_m > 0:
            raise ParameterError("spacing_m must be positive")
        if not self.altitude_agl_m > 0:
            raise ParameterError("altitude_agl_m must be positive")

    @property
    def center_index(self) -> tuple[int, int]:
        return (self.n // 2, self.m // 2)

    def waypoint_xy(self, i: int, j: int) -> tuple[float, float]:
        """Ground position of waypoint (i, j); i steps east, j steps north."""
        x = self.center_xy[0] + (i - (self.n - 1) / 2.0) * self.spacing_m
        y = self.center_xy[1] + (j - (self.m - 1) / 2.0) * self.spacing_m
        return (x, y)

    def poses(
        self,
        fov_deg: float = DEFAULT_FOV_DEG,
        resolution: int = DEFAULT_RESOLUTION,
        yaw_deg: float = 0.0,
    ) -> dict[tuple[int, int], CameraPose]:
        """One nadir pose per waypoint, keyed by grid index."""
        out = {}
        for i in range(self.n):
            for j in range(self.m):
                x, y = self.waypoint_xy(i, j)
                out[(i, j)] = CameraPose(
                    (x, y, self.altitude_agl_m), yaw_deg, fov_deg, resolution, resolution
                )
        return out


@dataclass(frozen=True)
class IntegralImage:
    """Occlusion-suppressed integral: mean raster plus per-pixel sample counts."""

    raster: TemperatureRaster
    counts: np.ndarray
    grid: SAGrid
    center_pose: CameraPose

    def __post_init__(self):
        counts = np.ascontiguousarray(np.asarray(self.counts, dtype=np.int32))
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)


def _match_waypoints(images, grid: SAGrid):
    """Assign (raster, pose) pairs to grid indices by camera position."""
    if len(images) == 0:
        raise ParameterError("no images to integrate")
    if len(images) != grid.n * grid.m:
        raise ParameterError(
            f"grid expects {grid.n * grid.m} images, got {len(images)}"
        )
    tol = 1e-6 * max(1.0, grid.spacing_m)
    assigned: dict[tuple[int, int], tuple[TemperatureRaster, CameraPose]] = {}
    for raster, pose in images:
        x, y, alt = pose.position
        fi = (x - grid.center_xy[0]) / grid.spacing_m + (grid.n - 1) / 2.0
        fj = (y - grid.center_xy[1]) / grid.spacing_m + (grid.m - 1) / 2.0
        i, j = round(fi), round(fj)
        wx, wy = grid.waypoint_xy(i, j)
        if not (0 <= i < grid.n and 0 <= j < grid.m):
            raise ParameterError(f"pose at ({x}, {y}) lies outside the grid")
        if abs(x - wx) > tol or abs(y - wy) > tol:
            raise ParameterError(f"pose at ({x}, {y}) does not sit on a waypoint")
        if abs(alt - grid.altitude_agl_m) > tol:
            raise ParameterError(
                f"pose altitude {alt} differs from grid altitude {grid.altitude_agl_m}"
            )
        if (i, j) in assigned:
            raise ParameterError(f"duplicate pose for waypoint ({i}, {j})")
        if raster.width != pose.width or raster.height != pose.height:
            raise ParameterError("image dimensions do not match pose resolution")
        assigned[(i, j)] = (raster, pose)
    return assigned


def _uniform_shift(pose: CameraPose, center: CameraPose, ground_height_m: float):
    """Constant source-pixel offset when reprojection reduces to a shift.

    True whenever both cameras are nadir at the same altitude with the same
    yaw and intrinsics, which is the standard capture layout.
    """
    same = (
        abs(pose.position[2] - center.position[2]) < 1e-9
        and abs(pose.yaw_deg - center.yaw_deg) < 1e-12
        and abs(pose.fov_deg - center.fov_deg) < 1e-12
        and pose.width == center.width
        and pose.height == center.height
    )
    if not same:
        return None
    dz = center.position[2] - ground_height_m
    k = pose.focal_px / dz
    ox = center.position[0] - pose.position[0]
    oy = center.position[1] - pose.position[1]
    yaw = math.radians(pose.yaw_deg)
    c, s = math.cos(yaw), math.sin(yaw)
    du = (c * ox + s * oy) * k
    dv = -(-s * ox + c * oy) * k
    return du, dv


def _accumulate_shifted(data, finite, du, dv, acc, cnt):
    """Add a uniformly shifted bilinear resampling of `data` into acc/cnt."""
    h, w = data.shape
    jc = int(math.floor(du))
    jr = int(math.floor(dv))
    fc = du - jc
    fr = dv - jr
    # Snap fractional parts that are pure float noise to the exact-shift case
    # (same 1e-9 px tolerance as bilinear_sample).
    if fc < 1e-9:
        fc = 0.0
    elif fc > 1 - 1e-9:
        fc, jc = 0.0, jc + 1
    if fr < 1e-9:
        fr = 0.0
    elif fr > 1 - 1e-9:
        fr, jr = 0.0, jr + 1

    need_r1 = fr > 0.0
    need_c1 = fc > 0.0
    # Output rows r map to source rows r + jr (+1 when interpolating).
    r_lo = max(0, -jr)
    r_hi = min(h, h - jr - (1 if need_r1 else 0))
    c_lo = max(0, -jc)
    c_hi = min(w, w - jc - (1 if need_c1 else 0))
    if r_hi <= r_lo or c_hi <= c_lo:
        return

    def src(dr, dc):
        return np.s_[r_lo + jr + dr : r_hi + jr + dr, c_lo + jc + dc : c_hi + jc + dc]

    dst = np.s_[r_lo:r_hi, c_lo:c_hi]
    terms = [((1 - fr) * (1 - fc), 0, 0)]
    if need_c1:
        terms.append(((1 - fr) * fc, 0, 1))
    if need_r1:
        terms.append((fr * (1 - fc), 1, 0))
    if need_r1 and need_c1:
        terms.append((fr * fc, 1, 1))

    valid = None
    for _, dr, dc in terms:
        v = finite[src(dr, dc)]
        valid = v if valid is None else (valid & v)
    total = None
    for wgt, dr, dc in terms:
        t = wgt * data[src(dr, dc)]
        total = t if total is None else (total + t)
    np.add(acc[dst], np.where(valid, total, 0.0), out=acc[dst])
    np.add(cnt[dst], valid, out=cnt[dst], casting="unsafe")


def _integrate_members(members, center_raster, center_pose, grid, ground_height_m):
    """Shared accumulation core: average reprojected members per pixel."""
    h, w = center_pose.height, center_pose.width
    acc = np.zeros((h, w), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.int64)

    ground = None  # lazy: only the general path needs the ground mesh
    for raster, pose in members:
        data = raster.data.astype(np.float64, copy=False)
        shift = _uniform_shift(pose, center_pose, ground_height_m)
        if shift is not None:
            _accumulate_shifted(data, np.isfinite(raster.data), shift[0], shift[1], acc, cnt)
            continue
        if ground is None:
            uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
            ground = project_to_ground(center_pose, (uu, vv), ground_height_m)
        su, sv = backproject_to_center(ground, pose, ground_height_m)
        sample = bilinear_sample(data, sv, su)
        good = np.isfinite(sample)
        acc[good] += sample[good]
        cnt[good] += 1

    with np.errstate(invalid="ignore"):
        sigma = np.where(cnt > 0, acc / np.maximum(cnt, 1), np.nan)
    raster = TemperatureRaster(
        sigma,
        center_raster.ambient_c,
        center_pose.ground_sample_distance(ground_height_m),
    )
    return IntegralImage(raster, cnt, grid, center_pose)


def integrate(
    images,
    grid: SAGrid,
    ground_height_m: float = 0.0,
) -> IntegralImage:
    """Integrate one image per waypoint into the central perspective.

    Per output pixel the result is the mean of the reprojected samples
    that actually cover it; uncovered pixels are no-data. Sample validity
    requires all contributing bilinear neighbors to be finite and inside
    the source frame.

    Args:
        images: sequence of (TemperatureRaster, CameraPose), one per
            waypoint, in any order.
        grid: waypoint layout the poses must realize.
        ground_height_m: constant ground-plane height.

    Raises ParameterError on empty input or pose/grid mismatch.
    """
    assigned = _match_waypoints(images, grid)
    center_raster, center_pose = assigned[grid.center_index]
    members = [assigned[key] for key in sorted(assigned)]
    return _integrate_members(members, center_raster, center_pose, grid, ground_height_m)


def integrate_mask(masks, grid: SAGrid, ground_height_m: float = 0.0) -> TemperatureRaster:
    """Aggregate per-view ground-visibility masks with the same reprojection
    and exclusion rule as integrate(); returns the mean visible fraction."""
    return integrate(masks, grid, ground_height_m).raster


def sliding_integrate(
    image_grid,
    window: SAGrid,
    stride: tuple[int, int] = (1, 1),
    pad: bool = False,
    ground_height_m: float = 0.0,
) -> list[IntegralImage]:
    """Apply a fixed aperture window across a larger X x Y capture grid.

    image_grid[i][j] holds (raster, pose) for capture waypoint (i, j) with
    i stepping east and j north. Each placement is integrated exactly as a
    direct integrate() call over that window's images. Without padding,
    only fully supported placements are produced; with padding, every
    stride-aligned center gets a window and members falling off the grid
    are simply excluded (never zero-filled).

    Returns placements in row-major (x, then y) order; an empty list (with
    a warning) when no placement fits.
    """
    X = len(image_grid)
    Y = len(image_grid[0]) if X else 0
    if any(len(col) != Y for col in image_grid):
        raise ParameterError("image_grid must be rectangular")
    sx, sy = stride if isinstance(stride, tuple) else (int(stride), int(stride))
    if sx < 1 or sy < 1:
        raise ParameterError("stride must be >= 1")

    results: list[IntegralImage] = []
    if pad:
        centers = [(i, j) for i in range(0, X, sx) for j in range(0, Y, sy)]
        for ci, cj in centers:
            members = []
            for i in range(ci - window.n // 2, ci - window.n // 2 + window.n):
                for j in range(cj - window.m // 2, cj - window.m // 2 + window.m):
                    if 0 <= i < X and 0 <= j < Y:
                        members.append(image_grid[i][j])
            sub = _window_grid(image_grid, window, ci, cj)
            results.append(_integrate_partial(members, sub, ground_height_m))
        return results

    nx = X - window.n + 1
    ny = Y - window.m + 1
    if nx <= 0 or ny <= 0:
        warnings.warn("aperture window does not fit inside the capture grid")
        return results
    for x0 in range(0, nx, sx):
        for y0 in range(0, ny, sy):
            members = [
                image_grid[x0 + i][y0 + j]
                for i in range(window.n)
                for j in range(window.m)
            ]
            sub = _window_grid(image_grid, window, x0 + window.n // 2, y0 + window.m // 2)
            results.append(integrate(members, sub, ground_height_m))
    return results


def _window_grid(image_grid, window: SAGrid, ci: int, cj: int) -> SAGrid:
    """SAGrid of one window placement, centered on capture index (ci, cj)."""
    pose = image_grid[min(max(ci, 0), len(image_grid) - 1)][
        min(max(cj, 0), len(image_grid[0]) - 1)
    ][1]
    # The window center must sit on waypoint (n//2, m//2) of the sub-grid.
    x = pose.position[0] - (window.n // 2 - (window.n - 1) / 2.0) * window.spacing_m
    y = pose.position[1] - (window.m // 2 - (window.m - 1) / 2.0) * window.spacing_m
    return SAGrid(window.n, window.m, window.spacing_m, window.altitude_agl_m, (x, y))


def _integrate_partial(members, grid: SAGrid, ground_height_m: float) -> IntegralImage:
    """integrate() for padded border windows: missing waypoints are excluded."""
    if not members:
        raise ParameterError("padded window has no members")
    tol = 1e-6 * max(1.0, grid.spacing_m)
    center = None
    cx, cy = grid.waypoint_xy(*grid.center_index)
    for raster, pose in members:
        if abs(pose.position[0] - cx) <= tol and abs(pose.position[1] - cy) <= tol:
            center = (raster, pose)
    if center is None:
        raise ParameterError("padded window lost its center waypoint")
    return _integrate_members(members, center[0], center[1], grid, ground_height_m)


# ---------------------------------------------------------------- manifests

def save_pose_manifest(path, entries) -> None:
    """Write the pose manifest: a JSON array of waypoint records.

    Each entry: {"index": [i, j], "position_m": [x, y, z], "yaw_deg": ...,
    "image": relative path, "fov_deg": ..., "mask": optional path}.
    """
    Path(path).write_text(json.dumps(list(entries), indent=2) + "\n")


def load_pose_manifest(path) -> list[dict]:
    records = json.loads(Path(path).read_text())
    if not isinstance(records, list):
        raise ParameterError("pose manifest must be a JSON array")
    for rec in records:
        for key in ("index", "position_m", "yaw_deg", "image"):
            if key not in rec:
                raise ParameterError(f"pose manifest entry missing '{key}': {rec}")
    return records
