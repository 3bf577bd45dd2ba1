"""Training loop: L1 plus a weighted perceptual term, warmup/cosine schedule.

Validation RMSE (in degrees Celsius, over the denormalized output) is
logged per epoch and drives best-checkpoint selection.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from .data import TrainingPair, load_pair, scan_dataset, split_scenes
from .model import (
    AMBIENT_SCALE_C,
    FixedFeatureExtractor,
    RestorationModel,
    denormalize,
    normalize,
    save_checkpoint,
)

log = logging.getLogger(__name__)

MIN_TRAINING_PAIRS = 100


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 8
    lr_peak: float = 1e-4
    lr_floor: float = 1e-5
    warmup_iters: int = 100
    perceptual_weight: float = 0.1
    base_channels: int = 40
    seed: int = 0
    sigma_name: str = "integrals/sigma_2d.tgr"
    truth_name: str = "truth.tgr"


class TrainingError(RuntimeError):
    pass


def _to_tensors(pairs: list[TrainingPair]):
    sigma = torch.from_numpy(np.stack([np.nan_to_num(p.sigma, nan=p.ambient_c) for p in pairs]))
    truth = torch.from_numpy(np.stack([p.truth for p in pairs]))
    ambient = torch.tensor([p.ambient_c for p in pairs], dtype=torch.float32)
    return sigma.unsqueeze(1).float(), truth.unsqueeze(1).float(), ambient


def _lr_at(step: int, total: int, cfg: TrainConfig) -> float:
    if step < cfg.warmup_iters:
        return cfg.lr_peak * (step + 1) / cfg.warmup_iters
    span = max(1, total - cfg.warmup_iters)
    progress = min(1.0, (step - cfg.warmup_iters) / span)
    return cfg.lr_floor + 0.5 * (cfg.lr_peak - cfg.lr_floor) * (1 + math.cos(math.pi * progress))


def validation_rmse(model: RestorationModel, sigma, truth, ambient, batch: int = 8) -> float:
    model.eval()
    errors = []
    with torch.no_grad():
        for k in range(0, len(sigma), batch):
            s = sigma[k : k + batch]
            t = truth[k : k + batch]
            a = ambient[k : k + batch]
            out = denormalize(
                model(normalize(s, a), a / AMBIENT_SCALE_C), a
            )
            errors.append(((out - t) ** 2).mean(dim=(1, 2, 3)))
    return float(torch.cat(errors).mean().sqrt())


def train(dataset_dir, out_checkpoint, cfg: TrainConfig = TrainConfig()) -> dict:
    """Train on a pipeline-emitted dataset directory; returns the history.

    Raises TrainingError when fewer than 100 training pairs exist or the
    loss goes non-finite.
    """
    scenes = scan_dataset(dataset_dir, sigma_name=cfg.sigma_name, truth_name=cfg.truth_name)
    train_scenes, val_scenes = split_scenes(scenes)
    if len(train_scenes) < MIN_TRAINING_PAIRS:
        raise TrainingError(
            f"need >= {MIN_TRAINING_PAIRS} training pairs, found {len(train_scenes)}"
        )
    train_pairs = [load_pair(s, sigma_name=cfg.sigma_name, truth_name=cfg.truth_name)
                   for s in train_scenes]
    val_pairs = [load_pair(s, sigma_name=cfg.sigma_name, truth_name=cfg.truth_name)
                 for s in val_scenes]

    torch.manual_seed(cfg.seed)
    model = RestorationModel(base=cfg.base_channels)
    features = FixedFeatureExtractor()
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr_peak, betas=(0.9, 0.99))

    sigma_t, truth_t, ambient_t = _to_tensors(train_pairs)
    sigma_v, truth_v, ambient_v = _to_tensors(val_pairs)

    n = len(train_pairs)
    iters_per_epoch = max(1, n // cfg.batch_size)
    total_iters = cfg.epochs * iters_per_epoch
    rng = np.random.default_rng(cfg.seed)

    history = {"train_loss": [], "val_rmse_c": []}
    best = math.inf
    step = 0
    out_checkpoint = Path(out_checkpoint)
    out_checkpoint.parent.mkdir(parents=True, exist_ok=True)

    for epoch in range(cfg.epochs):
        model.train()
        order = rng.permutation(n)
        epoch_loss = 0.0
        for k in range(iters_per_epoch):
            idx = order[k * cfg.batch_size : (k + 1) * cfg.batch_size]
            s = sigma_t[idx]
            t = truth_t[idx]
            a = ambient_t[idx]
            lr = _lr_at(step, total_iters, cfg)
            for group in opt.param_groups:
                group["lr"] = lr

            s_n = normalize(s, a)
            t_n = normalize(t, a)
            out = model(s_n, a / AMBIENT_SCALE_C)
            loss = F.l1_loss(out, t_n)
            if cfg.perceptual_weight > 0:
                loss = loss + cfg.perceptual_weight * F.l1_loss(
                    features(out), features(t_n)
                )
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            epoch_loss += float(loss)
            step += 1

        val_rmse = validation_rmse(model, sigma_v, truth_v, ambient_v, cfg.batch_size)
        history["train_loss"].append(epoch_loss / iters_per_epoch)
        history["val_rmse_c"].append(val_rmse)
        log.info("epoch %d: train loss %.5f, val RMSE %.3f degC",
                 epoch, history["train_loss"][-1], val_rmse)
        if val_rmse < best:
            best = val_rmse
            save_checkpoint(
                out_checkpoint, model,
                meta={"epoch": epoch, "val_rmse_c": val_rmse, "config": vars(cfg)},
            )

    history["best_val_rmse_c"] = best
    Path(str(out_checkpoint) + ".history.json").write_text(json.dumps(history, indent=2))
    return history
