"""Training-pair loading from pipeline-emitted scene directories.

A dataset root holds one directory per scene; each scene provides the
integral (integrals/sigma_2d.tgr by default), the occlusion-free ground
truth (truth.tgr), and optionally the aggregated visibility mask. The
train/validation split is by scene, 80/20, so no seed leaks across.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .tgr import read_tgr


@dataclass
class TrainingPair:
    sigma: np.ndarray  # (h, w) float32
    truth: np.ndarray
    ambient_c: float
    mask: np.ndarray | None = None

    def __post_init__(self):
        if self.sigma.shape != self.truth.shape:
            raise ValueError("sigma and truth dimensions differ")
        if self.mask is not None and self.mask.shape != self.sigma.shape:
            raise ValueError("mask dimensions differ")


def scan_dataset(
    root,
    sigma_name: str = "integrals/sigma_2d.tgr",
    truth_name: str = "truth.tgr",
    mask_name: str = "integrals/fmask_2d.tgr",
) -> list[Path]:
    """Scene directories under root that carry both required rasters."""
    root = Path(root)
    scenes = sorted(
        d for d in root.iterdir()
        if d.is_dir() and (d / sigma_name).exists() and (d / truth_name).exists()
    )
    return scenes


def load_pair(scene: Path, sigma_name="integrals/sigma_2d.tgr",
              truth_name="truth.tgr", mask_name="integrals/fmask_2d.tgr") -> TrainingPair:
    sigma, ambient, _ = read_tgr(scene / sigma_name)
    truth, _, _ = read_tgr(scene / truth_name)
    mask = None
    if (scene / mask_name).exists():
        mask, _, _ = read_tgr(scene / mask_name)
    return TrainingPair(sigma, truth, ambient, mask)


def split_scenes(scenes, val_fraction: float = 0.2):
    """Deterministic 80/20 split by scene order (disjoint scene seeds)."""
    n_val = max(1, int(round(len(scenes) * val_fraction)))
    ordered = list(scenes)
    # Take every fifth scene for validation so parameter ranges interleave.
    val = ordered[::max(1, len(ordered) // n_val)][:n_val]
    val_set = set(val)
    train = [s for s in ordered if s not in val_set]
    return train, val
