"""Occlusion-free ground-truth surface temperature fields.

Synthesizes surface rasters as seeded multi-octave value noise with smooth
radial hotspot kernels on top, and re-targets them to other ambient and
fire temperature ranges:

* non-fire pixels are shifted by ``delta_t`` with a sigmoid weight
  ``w(t) = psi(alpha*(t - t_lower)) - psi(alpha*(t - t_upper))`` so the
  shift fades out smoothly below the freezing point and above the
  potential-fire bound,
* fire pixels (``t > t_upper``) are rescaled linearly so the source
  maximum fire temperature maps onto a chosen target maximum, with
  ``t_upper`` as the fixed point.

``t_upper`` is the ambient temperature plus 15 °C: sun-heated biomass does
not exceed that, so anything hotter is potential fire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ParameterError
from .raster import TemperatureRaster

SUN_ABSORPTION_MAX_C = 15.0  # biomass ceiling above ambient
DEFAULT_ALPHA = 0.5
DEFAULT_SOURCE_AMBIENT_C = 9.0
DEFAULT_SOURCE_FIRE_MAX_C = 98.0

# Background texture spans [ambient - 4, ambient + 15] before clamping at
# the freezing point.
_BACKGROUND_DROP_C = 4.0
_NOISE_OCTAVES = 5
_NOISE_BASE_CELLS = 4
_NOISE_PERSISTENCE = 0.55


@dataclass(frozen=True)
class AugmentationParams:
    """Parameters of the two-branch temperature re-targeting."""

    t_lower_c: float
    t_upper_c: float
    alpha: float
    delta_t_c: float
    t_max_c: float
    t_max_target_c: float

    def __post_init__(self):
        if not self.t_lower_c < self.t_upper_c:
            raise ParameterError("t_lower_c must be below t_upper_c")
        if not self.t_max_c > self.t_upper_c:
            raise ParameterError("t_max_c must exceed t_upper_c")
        if not self.t_max_target_c > self.t_upper_c:
            raise ParameterError("t_max_target_c must exceed t_upper_c")
        if not self.alpha > 0:
            raise ParameterError("alpha must be positive")

    @property
    def fire_scale(self) -> float:
        return (self.t_max_target_c - self.t_upper_c) / (self.t_max_c - self.t_upper_c)

    @classmethod
    def for_ambient(
        cls,
        target_ambient_c: float,
        source_ambient_c: float = DEFAULT_SOURCE_AMBIENT_C,
        t_max_c: float = DEFAULT_SOURCE_FIRE_MAX_C,
        t_max_target_c: float = 300.0,
        alpha: float = DEFAULT_ALPHA,
        t_lower_c: float = 0.0,
    ) -> "AugmentationParams":
        """Parameters that move a field recorded at `source_ambient_c` to a
        new ambient temperature and fire range."""
        return cls(
            t_lower_c=t_lower_c,
            t_upper_c=source_ambient_c + SUN_ABSORPTION_MAX_C,
            alpha=alpha,
            delta_t_c=target_ambient_c - source_ambient_c,
            t_max_c=t_max_c,
            t_max_target_c=t_max_target_c,
        )


@dataclass(frozen=True)
class HotspotSpec:
    """Radial fire kernel: peak temperature at `center`, smooth falloff."""

    center: tuple[float, float]  # ground meters (x east, y north)
    radius_m: float
    peak_c: float
    falloff: float = 3.0

    def __post_init__(self):
        if not self.radius_m > 0:
            raise ParameterError("hotspot radius_m must be positive")
        if not self.falloff > 0:
            raise ParameterError("hotspot falloff must be positive")


def sigmoid_weight(t, p: AugmentationParams):
    """Smooth weight w(t) in (0, 1) gating the ambient shift. Array-safe.

    Evaluated as (1 - exp(b - a)) * psi(a) * psi(-b) with a, b the two
    sigmoid arguments: algebraically equal to psi(a) - psi(b) but free of
    the catastrophic cancellation that would zero the tails.
    """
    t = np.asarray(t, dtype=np.float64)
    a = p.alpha * (t - p.t_lower_c)
    b = p.alpha * (t - p.t_upper_c)
    w = -np.expm1(b - a) * expit(a) * expit(-b)
    return w if w.ndim else float(w)


def augment_nonfire(t, p: AugmentationParams):
    """Shift non-fire temperatures by delta_t with sigmoid fade-out."""
    t64 = np.asarray(t, dtype=np.float64)
    out = t64 + sigmoid_weight(t64, p) * p.delta_t_c
    return out if out.ndim else float(out)


def augment_fire(t, p: AugmentationParams):
    """Linearly rescale a fire temperature; fixed point at t_upper_c.

    Maps t_max_c onto t_max_target_c exactly. Scalar inputs must exceed
    t_upper_c; use augment_nonfire below that.
    """
    t64 = np.asarray(t, dtype=np.float64)
    if t64.ndim == 0 and not t64 > p.t_upper_c:
        raise ParameterError(
            f"augment_fire requires t > t_upper_c ({p.t_upper_c}), got {float(t64)}"
        )
    out = p.t_upper_c + p.fire_scale * (t64 - p.t_upper_c)
    return out if out.ndim else float(out)


def augment_raster(raster: TemperatureRaster, p: AugmentationParams) -> TemperatureRaster:
    """Apply the fire branch above t_upper_c and the non-fire branch below.

    No-data pixels stay no-data; the ambient metadata shifts by delta_t.
    """
    t = raster.data.astype(np.float64)
    with np.errstate(invalid="ignore"):
        fire = t > p.t_upper_c
    out = np.where(fire, p.t_upper_c + p.fire_scale * (t - p.t_upper_c), augment_nonfire(t, p))
    out = np.where(np.isfinite(t), out, np.nan)
    return TemperatureRaster(out, raster.ambient_c + p.delta_t_c, raster.ground_res_m)


def _value_noise(seed: int, size: int) -> np.ndarray:
    """Multi-octave value noise in [0, 1], bit-identical for a given seed.

    Each octave draws its lattice from an independent counter-based stream,
    so generation order (or tiling across workers) cannot change the field.
    """
    acc = np.zeros((size, size), dtype=np.float64)
    amp = 1.0
    total_amp = 0.0
    for octave in range(_NOISE_OCTAVES):
        cells = _NOISE_BASE_CELLS * (1 << octave)
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(octave,))
        lattice = np.random.Generator(np.random.Philox(ss)).random((cells + 1, cells + 1))

        pos = np.linspace(0.0, cells, size)
        i0 = np.minimum(pos.astype(np.int64), cells - 1)
        f = pos - i0
        s = f * f * (3.0 - 2.0 * f)  # smoothstep, C1-continuous texture

        ry, cy = i0[:, None], i0[None, :]
        sy, sx = s[:, None], s[None, :]
        acc += amp * (
            lattice[ry, cy] * (1 - sy) * (1 - sx)
            + lattice[ry, cy + 1] * (1 - sy) * sx
            + lattice[ry + 1, cy] * sy * (1 - sx)
            + lattice[ry + 1, cy + 1] * sy * sx
        )
        total_amp += amp
        amp *= _NOISE_PERSISTENCE

    acc /= total_amp
    lo, hi = acc.min(), acc.max()
    return (acc - lo) / (hi - lo) if hi > lo else np.full_like(acc, 0.5)


def gen_surface_field(
    seed: int,
    ambient_c: float,
    size: int,
    hotspots: list[HotspotSpec] | tuple[HotspotSpec, ...] = (),
    ground_res_m: float = 0.1,
    t_lower_c: float = 0.0,
) -> TemperatureRaster:
    """Deterministic occlusion-free surface-temperature raster.

    The background is multi-octave value noise stretched over
    [max(t_lower_c, ambient - 4), ambient + 15]; each hotspot adds a radial
    kernel with a one-pixel flat core, clamped so its maximum is exactly
    its peak. Hotspot kernels are zero beyond four radii, so pixels outside
    every hotspot's influence stay within the background range.

    Raises ParameterError for non-positive size or a hotspot center outside
    the raster extent.
    """
    if size < 1:
        raise ParameterError("size must be >= 1")
    t_upper = ambient_c + SUN_ABSORPTION_MAX_C

    lo = max(t_lower_c, ambient_c - _BACKGROUND_DROP_C)
    field = lo + (t_upper - lo) * _value_noise(int(seed), size)

    if hotspots:
        half = (size - 1) / 2.0 * ground_res_m
        idx = np.arange(size, dtype=np.float64)
        px = (idx - (size - 1) / 2.0) * ground_res_m  # pixel-center x by column
        py = ((size - 1) / 2.0 - idx) * ground_res_m  # pixel-center y by row
        gx = px[None, :]
        gy = py[:, None]
        for spot in sorted(hotspots, key=lambda s: -s.peak_c):
            cx, cy = spot.center
            if not (-half <= cx <= half and -half <= cy <= half):
                raise ParameterError(
                    f"hotspot center {spot.center} outside raster extent ±{half:.2f} m"
                )
            if not spot.peak_c > t_upper:
                raise ParameterError(
                    f"hotspot peak {spot.peak_c} must exceed t_upper {t_upper}"
                )
            r = np.hypot(gx - cx, gy - cy)
            # One-pixel flat core guarantees the raster hits the peak exactly.
            reff = np.maximum(r - ground_res_m, 0.0) / spot.radius_m
            kernel = spot.peak_c * np.exp(-spot.falloff * reff * reff)
            kernel[r > 4.0 * spot.radius_m] = 0.0
            field = np.maximum(field, np.minimum(field + kernel, spot.peak_c))

    return TemperatureRaster(field, ambient_c, ground_res_m)
