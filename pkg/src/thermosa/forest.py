"""Procedural forest scenes and nadir thermal rendering.

A scene scatters parameterized trees (opaque trunk cylinder plus an
ellipsoidal crown filled with oriented opaque leaf discs) over a bound
surface-temperature raster. Rendering casts one ray per pixel (optionally
supersampled): a ray that reaches the ground returns the surface-field
temperature at the hit, otherwise the thermal radiation of the first
vegetation element hit. A visibility mask records, per pixel, the fraction
of rays that reached the ground.

Vegetation radiates at ambient plus a direct-sunlight term: each element's
exposure along the solar direction is attenuated by the leaf-area optical
depth of every crown the sun ray crosses (its own included) and zeroed
behind trunks. The sun sits in the east-west vertical plane.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .integration import CameraPose
from .raster import TemperatureRaster, bilinear_sample
from .surface import SUN_ABSORPTION_MAX_C

_EPS = 1e-12


@dataclass(frozen=True)
class ForestParams:
    """Stand-level forest description; per-tree attributes are drawn from
    the given ranges by the scene seed."""

    density_tpha: float
    extent_m: float
    seed: int
    height_range_m: tuple[float, float] = (5.0, 20.0)
    trunk_len_range_m: tuple[float, float] = (4.0, 8.0)
    trunk_diam_range_m: tuple[float, float] = (0.20, 0.50)
    leaf_size_range_m: tuple[float, float] = (0.05, 0.20)
    crown_radius_range_m: tuple[float, float] = (1.5, 3.0)
    # Vertical leaf-area optical depth through a crown center; calibrates
    # single-crown transmittance (exp(-lad), ~0.45 by default).
    leaf_area_density: float = 0.8
    min_spacing_m: float = 1.5

    def __post_init__(self):
        if not 0 <= self.density_tpha <= 2000:
            raise ParameterError("density_tpha must be within [0, 2000]")
        if not self.extent_m > 0:
            raise ParameterError("extent_m must be positive")
        for name in (
            "height_range_m",
            "trunk_len_range_m",
            "trunk_diam_range_m",
            "leaf_size_range_m",
            "crown_radius_range_m",
        ):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ParameterError(f"{name} must satisfy 0 < min <= max")
        if not self.leaf_area_density > 0:
            raise ParameterError("leaf_area_density must be positive")


@dataclass(frozen=True)
class ThermalEnv:
    """Ambient temperature plus the solar heating model of the stand."""

    ambient_c: float
    sun_absorption_c: float = 0.0
    solar_angle_deg: float = 0.0  # 0 = zenith, +/-90 = horizon, east-west plane

    def __post_init__(self):
        if not 0 <= self.sun_absorption_c <= SUN_ABSORPTION_MAX_C:
            raise ParameterError(
                f"sun_absorption_c must be within [0, {SUN_ABSORPTION_MAX_C}]"
            )
        if not -90 <= self.solar_angle_deg <= 90:
            raise ParameterError("solar_angle_deg must be within [-90, 90]")

    @property
    def sun_direction(self) -> np.ndarray:
        """Unit vector pointing toward the sun (x east, z up)."""
        a = math.radians(self.solar_angle_deg)
        return np.array([math.sin(a), 0.0, math.cos(a)])


@dataclass(frozen=True)
class LeafElement:
    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    radius_m: float
    exposure: float


@dataclass(frozen=True)
class TrunkElement:
    base_xy: tuple[float, float]
    length_m: float
    radius_m: float
    exposure: float


def vegetation_temperature(element, env: ThermalEnv) -> float:
    """Radiated temperature of a scene element under the environment's sun."""
    return env.ambient_c + env.sun_absorption_c * element.exposure


class ForestScene:
    """Immutable procedural stand bound to a surface raster and environment.

    Geometry lives in flat numpy arrays (leaves across all trees pooled);
    a y-sorted element index accelerates the in-plane solar shadow queries
    and renders prune by projected footprint, so the scene is safe to share
    across render workers.
    """

    def __init__(self, params, env, surface, trees, leaves):
        self.params = params
        self.env = env
        self.surface = surface
        (
            self.tree_xy,
            self.trunk_radius,
            self.trunk_len,
            self.tree_height,
            self.crown_a,
            self.crown_c,
        ) = trees
        self.crown_z = self.trunk_len + self.crown_c  # ellipsoid center height
        (self.leaf_center, self.leaf_normal, self.leaf_radius, self.leaf_tree) = leaves
        self.n_trees = len(self.tree_xy)
        self.n_leaves = len(self.leaf_center)
        self.max_height_m = float(self.tree_height.max()) if self.n_trees else 0.0

        self._leaf_exposure, self._trunk_exposure = self._solar_exposures()
        self.leaf_temp_c = env.ambient_c + env.sun_absorption_c * self._leaf_exposure
        self.trunk_temp_c = env.ambient_c + env.sun_absorption_c * self._trunk_exposure
        for arr in (
            self.tree_xy, self.trunk_radius, self.trunk_len, self.tree_height,
            self.crown_a, self.crown_c, self.crown_z, self.leaf_center,
            self.leaf_normal, self.leaf_radius, self.leaf_tree,
            self.leaf_temp_c, self.trunk_temp_c,
        ):
            arr.flags.writeable = False

    # ------------------------------------------------------------ elements

    def leaf(self, i: int) -> LeafElement:
        return LeafElement(
            tuple(self.leaf_center[i]),
            tuple(self.leaf_normal[i]),
            float(self.leaf_radius[i]),
            float(self._leaf_exposure[i]),
        )

    def trunk(self, i: int) -> TrunkElement:
        return TrunkElement(
            tuple(self.tree_xy[i]),
            float(self.trunk_len[i]),
            float(self.trunk_radius[i]),
            float(self._trunk_exposure[i]),
        )

    def describe(self) -> dict:
        """JSON-ready scene description (tree list with positions/dimensions)."""
        trees = [
            {
                "position_m": [float(x), float(y)],
                "height_m": float(h),
                "trunk_length_m": float(t),
                "trunk_diameter_m": float(2 * r),
                "crown_radius_m": float(a),
                "leaf_count": int(np.count_nonzero(self.leaf_tree == i)),
            }
            for i, ((x, y), h, t, r, a) in enumerate(
                zip(self.tree_xy, self.tree_height, self.trunk_len,
                    self.trunk_radius, self.crown_a)
            )
        ]
        return {
            "seed": self.params.seed,
            "density_tpha": self.params.density_tpha,
            "extent_m": self.params.extent_m,
            "ambient_c": self.env.ambient_c,
            "sun_absorption_c": self.env.sun_absorption_c,
            "solar_angle_deg": self.env.solar_angle_deg,
            "tree_count": self.n_trees,
            "leaf_count": self.n_leaves,
            "trees": trees,
        }

    # ---------------------------------------------------------------- solar

    def sun_exposure(self, points: np.ndarray, normals: np.ndarray | None = None) -> np.ndarray:
        """Sun-facing visibility of world points in [0, 1].

        Multiplies crown transmittance exp(-optical depth) along the sun
        ray with the |cos| orientation factor when disc normals are given;
        points whose sun ray hits a trunk are fully shadowed.
        """
        points = np.atleast_2d(np.asarray(points, dtype=np.float64))
        n_pts = len(points)
        if n_pts == 0:
            return np.zeros(0)
        sun = self.env.sun_direction
        depth = np.zeros(n_pts)
        blocked = np.zeros(n_pts, dtype=bool)

        if self.n_trees:
            order = np.argsort(points[:, 1], kind="stable")
            py_sorted = points[order, 1]
            for j in range(self.n_trees):
                # Sun rays stay in their east-west plane: only trees within
                # one crown radius in y can shade a point.
                reach = max(self.crown_a[j], self.trunk_radius[j])
                lo = np.searchsorted(py_sorted, self.tree_xy[j, 1] - reach)
                hi = np.searchsorted(py_sorted, self.tree_xy[j, 1] + reach)
                if hi <= lo:
                    continue
                idx = order[lo:hi]
                p = points[idx]
                depth[idx] += self._crown_chord(p, sun, j) * (
                    self.params.leaf_area_density / (2.0 * self.crown_c[j])
                )
                blocked[idx] |= self._trunk_blocks(p, sun, j)

        exposure = np.exp(-depth)
        exposure[blocked] = 0.0
        if normals is not None:
            normals = np.atleast_2d(np.asarray(normals, dtype=np.float64))
            exposure = exposure * np.abs(normals @ sun)
        return exposure

    def _crown_chord(self, p: np.ndarray, d: np.ndarray, j: int) -> np.ndarray:
        """Length of the forward sun-ray chord through crown ellipsoid j."""
        axes = np.array([self.crown_a[j], self.crown_a[j], self.crown_c[j]])
        center = np.array([self.tree_xy[j, 0], self.tree_xy[j, 1], self.crown_z[j]])
        q = (p - center) / axes
        dq = d / axes
        a = dq @ dq
        b = q @ dq
        c = np.einsum("ij,ij->i", q, q) - 1.0
        disc = b * b - a * c
        hit = disc > 0
        s = np.sqrt(np.where(hit, disc, 0.0))
        s0 = np.maximum((-b - s) / a, 0.0)
        s1 = np.maximum((-b + s) / a, 0.0)
        return np.where(hit, s1 - s0, 0.0)

    def _trunk_blocks(self, p: np.ndarray, d: np.ndarray, j: int) -> np.ndarray:
        """True where the forward sun ray from p crosses trunk cylinder j."""
        r = self.trunk_radius[j]
        length = self.trunk_len[j]
        o = p[:, :2] - self.tree_xy[j]
        dxy = d[:2]
        a = dxy @ dxy
        if a < _EPS:  # zenith sun: only points inside the trunk's disc and
            inside = np.einsum("ij,ij->i", o, o) <= r * r  # below its top
            return inside & (p[:, 2] < length)
        b = o @ dxy
        c = np.einsum("ij,ij->i", o, o) - r * r
        disc = b * b - a * c
        hit = disc > 0
        s = np.sqrt(np.where(hit, disc, 0.0))
        s0 = (-b - s) / a
        s1 = (-b + s) / a
        z0 = p[:, 2] + np.maximum(s0, 0.0) * d[2]
        z1 = p[:, 2] + np.maximum(s1, 0.0) * d[2]
        zlo = np.minimum(z0, z1)
        zhi = np.maximum(z0, z1)
        return hit & (s1 > _EPS) & (zlo <= length) & (zhi >= 0.0)

    def _solar_exposures(self):
        if self.env.sun_absorption_c == 0.0 or (self.n_leaves + self.n_trees) == 0:
            # No solar term: exposure is irrelevant to temperatures.
            return np.ones(self.n_leaves), np.ones(self.n_trees)
        leaf_exp = self.sun_exposure(self.leaf_center, self.leaf_normal)
        trunk_mid = np.column_stack(
            [self.tree_xy[:, 0], self.tree_xy[:, 1], 0.5 * self.trunk_len]
        )
        trunk_exp = self.sun_exposure(trunk_mid)
        return leaf_exp, trunk_exp


def _leaf_count(params: ForestParams, crown_a: float) -> float:
    """Disc count giving the target vertical optical depth through the crown.

    For discs with random orientation and centers uniform in the ellipsoid,
    a vertical center chord crosses N * 0.75 * E[rho^2] / a^2 of them in
    expectation.
    """
    lo, hi = params.leaf_size_range_m
    r0, r1 = lo / 2.0, hi / 2.0
    mean_r2 = (r0 * r0 + r0 * r1 + r1 * r1) / 3.0
    return params.leaf_area_density * crown_a * crown_a / (0.75 * mean_r2)


def build_scene(
    params: ForestParams, surface: TemperatureRaster, env: ThermalEnv
) -> ForestScene:
    """Scatter a forest stand over the surface raster, deterministically.

    Tree count is one Bernoulli draw per square meter of extent (expected
    count = density * area); positions are uniform with a minimum-spacing
    rejection pass. Raises ParameterError when the surface raster does not
    cover the requested extent.
    """
    cover_x = surface.width * surface.ground_res_m
    cover_y = surface.height * surface.ground_res_m
    if cover_x + 1e-9 < params.extent_m or cover_y + 1e-9 < params.extent_m:
        raise ParameterError(
            f"surface covers {cover_x:.1f}x{cover_y:.1f} m, "
            f"smaller than extent {params.extent_m} m"
        )

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(params.seed)))
    area_m2 = params.extent_m * params.extent_m
    count = int(rng.binomial(max(1, round(area_m2)), min(1.0, params.density_tpha / 1e4)))

    half = params.extent_m / 2.0
    positions = np.zeros((count, 2))
    placed = 0
    attempts = 0
    min_d2 = params.min_spacing_m**2
    while placed < count and attempts < 200 * max(count, 1):
        cand = rng.uniform(-half, half, size=2)
        attempts += 1
        if placed:
            d2 = np.sum((positions[:placed] - cand) ** 2, axis=1)
            if d2.min() < min_d2:
                continue
        positions[placed] = cand
        placed += 1
    positions = positions[:placed]
    count = placed

    trunk_len = rng.uniform(*params.trunk_len_range_m, size=count)
    height = rng.uniform(
        np.maximum(params.height_range_m[0], trunk_len + 1.0),
        params.height_range_m[1],
        size=count,
    )
    trunk_radius = rng.uniform(*params.trunk_diam_range_m, size=count) / 2.0
    crown_a = rng.uniform(*params.crown_radius_range_m, size=count)
    crown_c = (height - trunk_len) / 2.0

    centers, normals, radii, owners = [], [], [], []
    lo_r, hi_r = params.leaf_size_range_m[0] / 2.0, params.leaf_size_range_m[1] / 2.0
    for i in range(count):
        n_leaves = int(round(_leaf_count(params, crown_a[i])))
        if n_leaves == 0:
            continue
        # Uniform points in the crown ellipsoid.
        u = rng.normal(size=(n_leaves, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        rad = rng.random(n_leaves) ** (1.0 / 3.0)
        offs = u * rad[:, None] * np.array([crown_a[i], crown_a[i], crown_c[i]])
        center = offs + np.array(
            [positions[i, 0], positions[i, 1], trunk_len[i] + crown_c[i]]
        )
        nrm = rng.normal(size=(n_leaves, 3))
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        centers.append(center)
        normals.append(nrm)
        radii.append(rng.uniform(lo_r, hi_r, size=n_leaves))
        owners.append(np.full(n_leaves, i, dtype=np.int32))

    if centers:
        leaves = (
            np.concatenate(centers),
            np.concatenate(normals),
            np.concatenate(radii),
            np.concatenate(owners),
        )
    else:
        leaves = (
            np.zeros((0, 3)),
            np.zeros((0, 3)),
            np.zeros(0),
            np.zeros(0, dtype=np.int32),
        )

    trees = (positions, trunk_radius, trunk_len, height, crown_a, crown_c)
    return ForestScene(params, env, surface, trees, leaves)


def ground_truth_view(surface: TemperatureRaster, pose: CameraPose) -> TemperatureRaster:
    """Surface field seen through the camera with no vegetation at all."""
    h, w = pose.height, pose.width
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    temps = _sample_ground(surface, pose, uu, vv)
    return TemperatureRaster(
        temps.reshape(h, w), surface.ambient_c, pose.ground_sample_distance()
    )


def _camera_frame(pose: CameraPose):
    yaw = math.radians(pose.yaw_deg)
    return pose.focal_px, pose.principal, math.cos(yaw), math.sin(yaw)


def _sample_ground(surface, pose, uu, vv):
    f, (cx, cy), c, s = _camera_frame(pose)
    alt = pose.position[2]
    dx = (uu - cx) / f
    dy = -(vv - cy) / f
    gx = pose.position[0] + alt * (c * dx - s * dy)
    gy = pose.position[1] + alt * (s * dx + c * dy)
    rows, cols = surface.ground_to_pixel(gx, gy)
    return bilinear_sample(surface.data, rows, cols)


def render_thermal(
    scene: ForestScene, pose: CameraPose, supersample: int = 1
) -> tuple[TemperatureRaster, TemperatureRaster]:
    """Render a nadir thermal image and its ground-visibility mask.

    Casts supersample^2 rays per pixel; each ray returns the surface-field
    temperature where it reaches the ground and the radiated temperature of
    the first vegetation element hit otherwise. The mask holds the fraction
    of rays per pixel that reached the ground.

    Raises ParameterError when the pose is not above the canopy.
    """
    if supersample < 1:
        raise ParameterError("supersample must be >= 1")
    if scene.n_trees and pose.position[2] <= scene.max_height_m:
        raise ParameterError(
            f"camera altitude {pose.position[2]} m is below the canopy "
            f"({scene.max_height_m:.1f} m)"
        )
    h, w = pose.height, pose.width
    temp_acc = np.zeros(h * w, dtype=np.float64)
    ground_acc = np.zeros(h * w, dtype=np.float64)

    if supersample == 1:
        offsets = [(0.0, 0.0)]
    else:
        step = 1.0 / supersample
        base = -0.5 + step / 2.0
        offsets = [
            (base + a * step, base + b * step)
            for a in range(supersample)
            for b in range(supersample)
        ]

    candidates = None
    if scene.n_leaves:
        margin = 0.0 if supersample == 1 else 0.5 * math.sqrt(2.0)
        candidates = _leaf_candidates(scene, pose, margin)
    if candidates is not None and supersample > 1:
        # Subrays move a hit point by at most t*|ray offset|/f; keep only
        # pairs whose center ray passes within that bound of the disc.
        slack_m = 0.75 * pose.position[2] / pose.focal_px
        candidates = _leaf_hits(
            scene, pose, 0.0, 0.0, candidates, slack_m, None, None, None
        )
        if len(candidates[0]) == 0:
            candidates = None

    for du, dv in offsets:
        temps, ground = _render_rays(scene, pose, du, dv, candidates)
        temp_acc += temps
        ground_acc += ground

    n = float(len(offsets))
    image = TemperatureRaster(
        (temp_acc / n).reshape(h, w),
        scene.env.ambient_c,
        pose.ground_sample_distance(),
    )
    mask = TemperatureRaster(
        (ground_acc / n).reshape(h, w), scene.env.ambient_c, pose.ground_sample_distance()
    )
    return image, mask


def _render_rays(scene: ForestScene, pose: CameraPose, du: float, dv: float, candidates):
    """One ray per pixel at subpixel offset (du, dv); returns temperatures
    and a 0/1 ground-hit indicator, both flat over the pixel grid."""
    h, w = pose.height, pose.width
    uu, vv = np.meshgrid(
        np.arange(w, dtype=np.float64) + du, np.arange(h, dtype=np.float64) + dv
    )
    ground_temp = _sample_ground(scene.surface, pose, uu, vv).ravel()

    hit_pix: list[np.ndarray] = []
    hit_t: list[np.ndarray] = []
    hit_temp: list[np.ndarray] = []
    if candidates is not None:
        _leaf_hits(scene, pose, du, dv, candidates, 0.0, hit_pix, hit_t, hit_temp)
    if scene.n_trees:
        _trunk_hits(scene, pose, du, dv, hit_pix, hit_t, hit_temp)

    temps = ground_temp.copy()
    ground = np.ones(h * w, dtype=np.float64)
    if hit_pix:
        pix = np.concatenate(hit_pix)
        t = np.concatenate(hit_t)
        val = np.concatenate(hit_temp)
        order = np.lexsort((t, pix))
        pix, t, val = pix[order], t[order], val[order]
        first_pix, first_idx = np.unique(pix, return_index=True)
        # Any vegetation hit is closer than the ground along a downward ray.
        temps[first_pix] = val[first_idx]
        ground[first_pix] = 0.0
    return temps, ground


def _ray_dirs(pose, u, v):
    """World xy slope of the ray through continuous pixel (u, v); the ray is
    parameterized by depth t below the camera: p(t) = C + t*(dx, dy, -1)."""
    f, (cx, cy), c, s = _camera_frame(pose)
    ix = (u - cx) / f
    iy = -(v - cy) / f
    return c * ix - s * iy, s * ix + c * iy


def _leaf_candidates(scene, pose, subray_margin_px):
    """Candidate (pixel, leaf) pairs whose ray could intersect the disc.

    Projects every leaf once and enumerates the pixels whose center lies
    within the disc's conservative projected radius (plus the supersampling
    offset margin). Returns flat (u, v, leaf index) arrays.
    """
    f, (cx, cy), cyaw, syaw = _camera_frame(pose)
    h, w = pose.height, pose.width
    alt = pose.position[2]
    cam = np.array([pose.position[0], pose.position[1], alt])

    centers = scene.leaf_center
    depth = alt - centers[:, 2]
    visible = depth > 0.5  # leaves essentially at the camera cannot occur
    if not visible.any():
        return None

    rel = centers[:, :2] - cam[:2]
    rx = cyaw * rel[:, 0] + syaw * rel[:, 1]
    ry = -syaw * rel[:, 0] + cyaw * rel[:, 1]
    uc = cx + f * rx / depth
    vc = cy - f * ry / depth

    # Projected half-extent of a disc: f*rho/(d-rho), inflated by |lateral|/d
    # for off-axis leaves. A pixel center can land a hit only within that
    # radius (+ subray offset); rect-center rounding adds half a pixel.
    lat = np.maximum(np.abs(rx), np.abs(ry))
    reach = (
        f * scene.leaf_radius / np.maximum(depth - scene.leaf_radius, 0.5)
        * (1.0 + lat / np.maximum(depth, 0.5))
        + subray_margin_px
    )
    k = np.floor(reach + 0.5 + 1e-9).astype(np.int64)
    in_view = (
        visible
        & (uc >= -k - 1) & (uc <= w + k) & (vc >= -k - 1) & (vc <= h + k)
    )
    if not in_view.any():
        return None

    us, vs, ls = [], [], []
    for kk in np.unique(k[in_view]):
        sel = np.flatnonzero(in_view & (k == kk))
        offs = np.arange(-kk, kk + 1)
        shape = (len(sel), offs.size, offs.size)
        uu = np.broadcast_to(
            np.rint(uc[sel])[:, None, None] + offs[None, :, None], shape
        ).ravel()
        vv = np.broadcast_to(
            np.rint(vc[sel])[:, None, None] + offs[None, None, :], shape
        ).ravel()
        leaf = np.broadcast_to(sel[:, None, None], shape).ravel()
        ok = (uu >= 0) & (uu < w) & (vv >= 0) & (vv < h)
        if ok.any():
            us.append(uu[ok].astype(np.int64))
            vs.append(vv[ok].astype(np.int64))
            ls.append(leaf[ok])
    if not us:
        return None
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ls)


def _leaf_hits(scene, pose, du, dv, candidates, slack_m, hit_pix, hit_t, hit_temp):
    """Exact ray-disc test of the candidate pairs at subray offset (du, dv).

    With slack_m > 0 this instead returns the pairs passing a widened
    distance test, for prefiltering candidates shared across subrays.
    """
    uu, vv, leaf = candidates
    w = pose.width
    alt = pose.position[2]
    cam = np.array([pose.position[0], pose.position[1], alt])

    dx, dy = _ray_dirs(pose, uu + du, vv + dv)
    n = scene.leaf_normal[leaf]
    p = scene.leaf_center[leaf]
    nd = n[:, 0] * dx + n[:, 1] * dy - n[:, 2]
    num = np.einsum("ij,ij->i", n, p - cam)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num / nd
    qx = cam[0] + t * dx - p[:, 0]
    qy = cam[1] + t * dy - p[:, 1]
    qz = (alt - t) - p[:, 2]  # hit height minus leaf height
    dist2 = qx * qx + qy * qy + qz * qz
    rad = scene.leaf_radius[leaf] + slack_m
    good = (
        np.isfinite(t)
        & (np.abs(nd) > _EPS)
        & (t > 0.5)
        & (t < alt)
        & (dist2 <= rad * rad)
    )
    if slack_m > 0:
        return uu[good], vv[good], leaf[good]
    if good.any():
        hit_pix.append((vv[good] * w + uu[good]).astype(np.int64))
        hit_t.append(t[good])
        hit_temp.append(scene.leaf_temp_c[leaf[good]])
    return None


def _trunk_hits(scene, pose, du, dv, hit_pix, hit_t, hit_temp):
    f, (cx, cy), cyaw, syaw = _camera_frame(pose)
    h, w = pose.height, pose.width
    alt = pose.position[2]
    cam = np.array([pose.position[0], pose.position[1]])

    for j in range(scene.n_trees):
        r = scene.trunk_radius[j]
        length = scene.trunk_len[j]
        rel = scene.tree_xy[j] - cam
        rx = cyaw * rel[0] + syaw * rel[1]
        ry = -syaw * rel[0] + cyaw * rel[1]
        depth_top = alt - length
        if depth_top <= 0.5:
            continue
        # Pixel bounding box of the trunk between its base and top rings.
        u0, v0 = cx + f * rx / alt, cy - f * ry / alt
        u1, v1 = cx + f * rx / depth_top, cy - f * ry / depth_top
        margin = math.ceil(f * r / depth_top) + 2
        ulo = max(0, int(math.floor(min(u0, u1))) - margin)
        uhi = min(w - 1, int(math.ceil(max(u0, u1))) + margin)
        vlo = max(0, int(math.floor(min(v0, v1))) - margin)
        vhi = min(h - 1, int(math.ceil(max(v0, v1))) + margin)
        if ulo > uhi or vlo > vhi:
            continue

        uu, vv = np.meshgrid(np.arange(ulo, uhi + 1), np.arange(vlo, vhi + 1))
        uu = uu.ravel()
        vv = vv.ravel()
        dx, dy = _ray_dirs(pose, uu + du, vv + dv)
        ox = cam[0] - scene.tree_xy[j, 0]
        oy = cam[1] - scene.tree_xy[j, 1]

        a = dx * dx + dy * dy
        b = ox * dx + oy * dy
        c = ox * ox + oy * oy - r * r
        t_hit = np.full(uu.shape, np.inf)

        vertical = a < _EPS
        if c <= 0:  # camera directly above the trunk: vertical rays hit the cap
            t_hit[vertical] = depth_top
        disc = b * b - a * c
        okq = ~vertical & (disc > 0)
        if okq.any():
            sq = np.sqrt(disc[okq])
            aq = a[okq]
            for root in ((-b[okq] - sq) / aq, (-b[okq] + sq) / aq):
                z = alt - root
                side = (root > 0.5) & (z >= 0.0) & (z <= length)
                tt = np.where(side, root, np.inf)
                t_hit[okq] = np.minimum(t_hit[okq], tt)
        # Top cap: the ray crosses z = length inside the radius.
        capx = cam[0] + depth_top * dx - scene.tree_xy[j, 0]
        capy = cam[1] + depth_top * dy - scene.tree_xy[j, 1]
        cap = capx * capx + capy * capy <= r * r
        t_hit[cap] = np.minimum(t_hit[cap], depth_top)

        good = np.isfinite(t_hit)
        if good.any():
            hit_pix.append((vv[good] * w + uu[good]).astype(np.int64))
            hit_t.append(t_hit[good])
            hit_temp.append(np.full(int(good.sum()), scene.trunk_temp_c[j]))


def export_scene_json(scene: ForestScene, path) -> None:
    """Write the reproducibility scene description as JSON."""
    Path(path).write_text(json.dumps(scene.describe(), indent=2) + "\n")
