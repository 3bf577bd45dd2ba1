"""Recover surface temperatures from occlusion-suppressed integrals.

An integral pixel mixes the true surface temperature with blurred canopy
radiation: sigma = f * T_surface + (1 - f) * T_vegetation, with f the
fraction of samples that reached the ground. With a known visibility
fraction the mixture inverts in closed form; that analytic backend is
built in. A learned restorer can be plugged in through a file-exchange
protocol: the integral (and optional mask) are written as TGR1 plus a
request manifest, the backend command is invoked on the manifest, and the
corrected raster is read back.
"""

from __future__ import annotations

import json
import os
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import BackendError, CapabilityError, EmptySelectionError, ParameterError
from .integration import IntegralImage
from .raster import TemperatureRaster, read_raster, write_raster

PHYSICAL_RANGE_C = (-40.0, 400.0)
DEFAULT_F_MIN = 0.1
PROTOCOL_VERSION = 1
EXCHANGE_DIR_ENV = "THERMOSA_EXCHANGE_DIR"


@dataclass(frozen=True)
class CorrectionBackend:
    """Descriptor of one correction route."""

    identifier: str
    needs_mask: bool
    external: bool


ANALYTIC_BACKEND = CorrectionBackend("analytic", needs_mask=True, external=False)


@dataclass
class CorrectionInput:
    """Integral to correct plus the side information the backends use."""

    sigma: TemperatureRaster
    ambient_c: float
    mask: TemperatureRaster | None = None
    veg_ref_c: float | None = None
    sun_absorption_c: float = 0.0

    def __post_init__(self):
        if isinstance(self.sigma, IntegralImage):
            self.sigma = self.sigma.raster
        if self.mask is not None and isinstance(self.mask, IntegralImage):
            self.mask = self.mask.raster
        if self.mask is not None and self.mask.data.shape != self.sigma.data.shape:
            raise ParameterError("visibility mask dimensions do not match the integral")

    @property
    def vegetation_reference_c(self) -> float:
        """Canopy reference temperature: given, or ambient plus half the
        solar absorption (average of sunlit and shaded foliage)."""
        if self.veg_ref_c is not None:
            return self.veg_ref_c
        return self.ambient_c + self.sun_absorption_c / 2.0


@dataclass(frozen=True)
class CorrectionResult:
    """Corrected raster plus per-pixel diagnostic flags."""

    raster: TemperatureRaster
    low_confidence: np.ndarray  # visibility below f_min: passed through
    clamped: np.ndarray  # unmixing left the physical range: clamped


def estimate_ambient(images) -> float:
    """Mean over all valid pixels of all images (the field procedure)."""
    total = 0.0
    count = 0
    for raster in images:
        valid = raster.valid
        count += int(valid.sum())
        if valid.any():
            total += float(raster.data[valid].astype(np.float64).sum())
    if count == 0:
        raise EmptySelectionError("no valid pixels in any image")
    return total / count


def estimate_vegetation_reference(
    sigma: TemperatureRaster,
    mask: TemperatureRaster,
    f_max: float = 0.05,
) -> float | None:
    """Estimate the canopy reference temperature from the data itself.

    Integral pixels whose visibility fraction is essentially zero show pure
    blurred vegetation signal, so their mean is a direct T_v measurement.
    Returns None when no such pixels exist.
    """
    sel = sigma.valid & mask.valid & (mask.data <= f_max)
    if not sel.any():
        return None
    return float(sigma.data[sel].astype(np.float64).mean())


def correct_analytic(inp: CorrectionInput, f_min: float = DEFAULT_F_MIN) -> CorrectionResult:
    """Invert the visibility mixture: sigma' = (sigma - (1-f)*T_v) / f.

    Pixels with f below f_min pass through unchanged and are flagged
    low-confidence; results outside the physical temperature range are
    clamped and flagged. Requires the visibility mask.
    """
    if inp.mask is None:
        raise CapabilityError("analytic correction requires a visibility mask")
    if not 0 < f_min <= 1:
        raise ParameterError("f_min must be in (0, 1]")

    sigma = inp.sigma.data.astype(np.float64)
    f = inp.mask.data.astype(np.float64)
    t_v = inp.vegetation_reference_c

    valid = np.isfinite(sigma)
    usable = valid & np.isfinite(f) & (f >= f_min)
    out = sigma.copy()
    out[usable] = (sigma[usable] - (1.0 - f[usable]) * t_v) / f[usable]

    lo, hi = PHYSICAL_RANGE_C
    with np.errstate(invalid="ignore"):
        clamped = usable & ((out < lo) | (out > hi))
        out = np.clip(out, lo, hi, where=np.isfinite(out), out=out)
    low_confidence = valid & ~usable

    raster = TemperatureRaster(out, inp.ambient_c, inp.sigma.ground_res_m)
    return CorrectionResult(raster, low_confidence, clamped)


def correct_external(
    inp: CorrectionInput,
    backend_cmd,
    exchange_dir=None,
    timeout_s: float = 60.0,
) -> TemperatureRaster:
    """Run an external restorer over the file-exchange protocol.

    Layout of the exchange directory: sigma.tgr (ambient embedded in the
    header), optional f.tgr, and request.json naming them; the backend is
    invoked as `<backend-cmd> --request <dir>/request.json` and must exit 0
    leaving sigma_prime.tgr of identical dimensions.

    Raises BackendError on timeout, nonzero exit, missing or malformed
    response, or a dimension mismatch.
    """
    if isinstance(backend_cmd, (str, os.PathLike)):
        backend_cmd = [str(backend_cmd)]
    else:
        backend_cmd = [str(part) for part in backend_cmd]

    root = exchange_dir or os.environ.get(EXCHANGE_DIR_ENV)
    tmp = None
    if root is None:
        tmp = tempfile.TemporaryDirectory(prefix="thermosa-exchange-")
        root = tmp.name
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)

    try:
        sigma_for_backend = TemperatureRaster(
            inp.sigma.data, inp.ambient_c, inp.sigma.ground_res_m
        )
        write_raster(sigma_for_backend, root / "sigma.tgr")
        request = {
            "version": PROTOCOL_VERSION,
            "ambient_c": inp.ambient_c,
            "input": "sigma.tgr",
            "output": "sigma_prime.tgr",
        }
        if inp.mask is not None:
            write_raster(inp.mask, root / "f.tgr")
            request["mask"] = "f.tgr"
        (root / "request.json").write_text(json.dumps(request, indent=2) + "\n")

        cmd = backend_cmd + ["--request", str(root / "request.json")]
        try:
            proc = subprocess.run(
                cmd, capture_output=True, timeout=timeout_s, text=True
            )
        except subprocess.TimeoutExpired as exc:
            raise BackendError(f"backend timed out after {timeout_s}s: {cmd}") from exc
        except OSError as exc:
            raise BackendError(f"backend could not be launched: {cmd}: {exc}") from exc
        if proc.returncode != 0:
            raise BackendError(
                f"backend exited {proc.returncode}: {proc.stderr.strip()[:500]}"
            )

        out_path = root / "sigma_prime.tgr"
        if not out_path.exists():
            raise BackendError(f"backend produced no output file {out_path}")
        try:
            corrected = read_raster(out_path)
        except Exception as exc:
            raise BackendError(f"backend response unreadable: {exc}") from exc
        if corrected.data.shape != inp.sigma.data.shape:
            raise BackendError(
                f"backend returned {corrected.data.shape[1]}x{corrected.data.shape[0]}, "
                f"expected {inp.sigma.width}x{inp.sigma.height}"
            )
        return corrected
    finally:
        if tmp is not None:
            tmp.cleanup()
