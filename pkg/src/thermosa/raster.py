"""Temperature rasters: the universal image currency of the pipeline.

A raster is a row-major float32 grid of temperatures in degrees Celsius
with a quiet-NaN no-data mark, ambient-temperature metadata, and a ground
resolution in meters per pixel. Rasters are immutable after construction
and safe to share across threads.

On disk the format is TGR1 (little-endian regardless of host):

    bytes  0-3   ASCII magic "TGR1"
    bytes  4-7   uint32 width
    bytes  8-11  uint32 height
    bytes 12-15  float32 ambient_c
    bytes 16-19  float32 ground_res_m
    payload      width*height float32 temperatures, row-major, top-left
                 origin; NaN = no-data

Pixel (row, col) is centered at ground coordinates
    x = (col - (width - 1) / 2) * ground_res_m
    y = ((height - 1) / 2 - row) * ground_res_m
so the raster is centered on the scene origin with x east and y north.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptySelectionError, FormatError, ParameterError

MAGIC = b"TGR1"
HEADER_SIZE = 20
_HEADER = struct.Struct("<4sIIff")


@dataclass(frozen=True)
class RegimeMask:
    """Half-open temperature interval [lower_c, upper_c) selecting pixels."""

    lower_c: float
    upper_c: float

    def __post_init__(self):
        if not self.lower_c < self.upper_c:
            raise ParameterError(
                f"regime requires lower_c < upper_c, got [{self.lower_c}, {self.upper_c})"
            )

    def select(self, values: np.ndarray) -> np.ndarray:
        """Boolean mask of values inside the interval (NaN never selected)."""
        with np.errstate(invalid="ignore"):
            return (values >= self.lower_c) & (values < self.upper_c)


FULL_REGIME = RegimeMask(0.0, 300.0)
FIRE_REGIME = RegimeMask(50.0, 300.0)


@dataclass(frozen=True, init=False, eq=False)
class TemperatureRaster:
    """2-D temperature grid (°C), float32, NaN marks no-data pixels."""

    data: np.ndarray
    ambient_c: float
    ground_res_m: float

    def __init__(self, data, ambient_c: float, ground_res_m: float):
        arr = np.asarray(data, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ParameterError(f"raster data must be a non-empty 2-D grid, got shape {arr.shape}")
        if not math.isfinite(ambient_c):
            raise ParameterError("ambient_c must be finite")
        if not (math.isfinite(ground_res_m) and ground_res_m > 0):
            raise ParameterError("ground_res_m must be finite and > 0")
        if np.isinf(arr).any():
            raise ParameterError("raster values must be finite or NaN")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "ambient_c", float(ambient_c))
        object.__setattr__(self, "ground_res_m", float(ground_res_m))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.data)

    def with_data(self, data: np.ndarray) -> "TemperatureRaster":
        """Same metadata, new pixel grid."""
        return TemperatureRaster(data, self.ambient_c, self.ground_res_m)

    def pixel_to_ground(self, rows, cols):
        """Ground (x, y) in meters of pixel centers (row/col may be arrays)."""
        rows = np.asarray(rows, dtype=np.float64)
        cols = np.asarray(cols, dtype=np.float64)
        x = (cols - (self.width - 1) / 2.0) * self.ground_res_m
        y = ((self.height - 1) / 2.0 - rows) * self.ground_res_m
        return x, y

    def ground_to_pixel(self, x, y):
        """Continuous (row, col) coordinates of ground points in meters."""
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        col = x / self.ground_res_m + (self.width - 1) / 2.0
        row = (self.height - 1) / 2.0 - y / self.ground_res_m
        return row, col


def write_raster(raster: TemperatureRaster, path) -> None:
    """Write a raster to `path` in the TGR1 format (bit-exact, little-endian)."""
    payload = raster.data
    if payload.dtype != np.float32:
        payload = payload.astype(np.float32)
    header = _HEADER.pack(
        MAGIC, raster.width, raster.height, raster.ambient_c, raster.ground_res_m
    )
    body = payload.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + body)


def read_raster(path) -> TemperatureRaster:
    """Read a TGR1 file; raises FormatError (with byte offset) on malformed input."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER_SIZE:
        raise FormatError(f"file too short for TGR1 header ({len(blob)} bytes)", offset=len(blob))
    magic, width, height, ambient_c, ground_res_m = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    if width == 0 or height == 0:
        raise FormatError(f"degenerate dimensions {width}x{height}", offset=4)
    if not math.isfinite(ambient_c):
        raise FormatError("non-finite ambient_c in header", offset=12)
    if not (math.isfinite(ground_res_m) and ground_res_m > 0):
        raise FormatError("non-finite or non-positive ground_res_m in header", offset=16)
    expected = HEADER_SIZE + 4 * width * height
    if len(blob) != expected:
        raise FormatError(
            f"payload truncated or oversized: {len(blob)} bytes, expected {expected}",
            offset=min(len(blob), expected),
        )
    data = np.frombuffer(blob, dtype="<f4", count=width * height, offset=HEADER_SIZE)
    data = data.reshape(height, width)
    if np.isinf(data).any():
        raise FormatError("payload contains non-finite, non-NaN values", offset=HEADER_SIZE)
    return TemperatureRaster(data, ambient_c, ground_res_m)


def raster_stats(raster: TemperatureRaster, regime: RegimeMask | None = None) -> dict:
    """min/max/mean/count over valid pixels, optionally regime-restricted.

    Raises EmptySelectionError when no valid pixel is selected.
    """
    values = raster.data[raster.valid]
    if regime is not None:
        values = values[regime.select(values)]
    if values.size == 0:
        raise EmptySelectionError("no valid pixels selected for statistics")
    values64 = values.astype(np.float64)
    return {
        "min": float(values64.min()),
        "max": float(values64.max()),
        "mean": float(values64.mean()),
        "count": int(values.size),
    }


def bilinear_sample(data: np.ndarray, rows, cols) -> np.ndarray:
    """Bilinear interpolation of `data` at continuous (row, col) coordinates.

    Pixel centers sit at integer coordinates. Out-of-bounds coordinates and
    samples whose contributing (nonzero-weight) neighbors include a no-data
    pixel come back NaN; a sample on an exact pixel center only depends on
    that pixel. Works on arrays.
    """
    rows, cols = np.broadcast_arrays(
        np.asarray(rows, dtype=np.float64), np.asarray(cols, dtype=np.float64)
    )
    shape = rows.shape
    rows = np.atleast_1d(rows).copy()
    cols = np.atleast_1d(cols).copy()
    # Sub-nanopixel offsets are projection noise, not signal: snap them so
    # border samples do not get excluded over a 1e-16 fractional part.
    for arr in (rows, cols):
        near = np.abs(arr - np.rint(arr)) < 1e-9
        arr[near] = np.rint(arr[near])
    h, w = data.shape

    inside = (rows >= 0) & (rows <= h - 1) & (cols >= 0) & (cols <= w - 1)

    # NaN coordinates (out-of-frame marks) index pixel 0; `inside` and the
    # NaN fractional weights below keep them out of the result.
    r0c = np.clip(np.floor(np.nan_to_num(rows)).astype(np.int64), 0, max(h - 2, 0))
    c0c = np.clip(np.floor(np.nan_to_num(cols)).astype(np.int64), 0, max(w - 2, 0))
    r1c = np.minimum(r0c + 1, h - 1)
    c1c = np.minimum(c0c + 1, w - 1)

    fr = rows - r0c
    fc = cols - c0c

    d = data.astype(np.float64, copy=False)
    weights = ((1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc)
    values = (d[r0c, c0c], d[r0c, c1c], d[r1c, c0c], d[r1c, c1c])

    out = np.zeros(rows.shape, dtype=np.float64)
    ok = inside.copy()
    for wgt, val in zip(weights, values):
        contributes = wgt > 0
        ok &= ~contributes | np.isfinite(val)
        out += np.where(contributes, wgt * np.nan_to_num(val), 0.0)
    return np.where(ok, out, np.nan).reshape(shape)


def resample_bilinear(raster: TemperatureRaster, rows, cols):
    """Bilinearly sample a raster at continuous (row, col) coordinates.

    Scalar coordinates give a scalar; arrays give an array. Out-of-bounds
    or NaN-neighbor samples are no-data (NaN).
    """
    out = bilinear_sample(raster.data, rows, cols)
    if np.isscalar(rows) or (np.ndim(rows) == 0 and np.ndim(cols) == 0):
        return float(out)
    return out
