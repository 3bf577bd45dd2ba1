"""Minimal TGR1 raster I/O.

The exchange protocol's raster currency: 20-byte little-endian header
("TGR1", uint32 width, uint32 height, float32 ambient_c, float32
ground_res_m) followed by row-major float32 temperatures, NaN = no-data.
Implemented here independently so this package only touches the producer
through its file formats.
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TGR1"
HEADER = struct.Struct("<4sIIff")


class TgrError(ValueError):
    pass


def read_tgr(path) -> tuple[np.ndarray, float, float]:
    """Returns (data[h, w] float32, ambient_c, ground_res_m)."""
    blob = Path(path).read_bytes()
    if len(blob) < HEADER.size:
        raise TgrError(f"{path}: too short for a TGR1 header")
    magic, width, height, ambient, res = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise TgrError(f"{path}: bad magic {magic!r}")
    if not (math.isfinite(ambient) and math.isfinite(res) and res > 0):
        raise TgrError(f"{path}: bad header fields")
    expected = HEADER.size + 4 * width * height
    if len(blob) != expected:
        raise TgrError(f"{path}: {len(blob)} bytes, expected {expected}")
    data = np.frombuffer(blob, dtype="<f4", offset=HEADER.size).reshape(height, width)
    return data.copy(), float(ambient), float(res)


def write_tgr(path, data: np.ndarray, ambient_c: float, ground_res_m: float) -> None:
    data = np.ascontiguousarray(data, dtype="<f4")
    if data.ndim != 2:
        raise TgrError("data must be 2-D")
    header = HEADER.pack(MAGIC, data.shape[1], data.shape[0], ambient_c, ground_res_m)
    Path(path).write_bytes(header + data.tobytes())
