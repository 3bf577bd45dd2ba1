"""Exchange-protocol server: correct one request manifest, or a batch.

A request directory holds request.json naming the input integral, optional
visibility mask, and the output path, all relative to the manifest:

    {"version": 1, "ambient_c": ..., "input": "sigma.tgr",
     "mask": "f.tgr", "output": "sigma_prime.tgr"}

Inference is deterministic: the checkpoint fully determines the output.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .model import AMBIENT_SCALE_C, denormalize, load_checkpoint, normalize
from .tgr import read_tgr, write_tgr

SUPPORTED_PROTOCOL = 1


class ServeError(RuntimeError):
    pass


def serve_request(request_path, model=None, checkpoint=None) -> Path:
    """Process one request manifest; returns the written output path."""
    request_path = Path(request_path)
    try:
        request = json.loads(request_path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ServeError(f"unreadable request manifest: {exc}") from exc
    if request.get("version") != SUPPORTED_PROTOCOL:
        raise ServeError(f"unsupported protocol version {request.get('version')!r}")
    for key in ("input", "output", "ambient_c"):
        if key not in request:
            raise ServeError(f"request manifest missing {key!r}")

    if model is None:
        if checkpoint is None:
            raise ServeError("no model or checkpoint given")
        model, _ = load_checkpoint(checkpoint)

    root = request_path.parent
    sigma, header_ambient, res = read_tgr(root / request["input"])
    ambient = float(request["ambient_c"])

    filled = np.nan_to_num(sigma, nan=ambient)
    s = torch.from_numpy(filled).float().unsqueeze(0).unsqueeze(0)
    a = torch.tensor([ambient], dtype=torch.float32)
    model.eval()
    with torch.no_grad():
        out = denormalize(model(normalize(s, a), a / AMBIENT_SCALE_C), a)
    restored = out.squeeze(0).squeeze(0).numpy().astype(np.float32)
    if restored.shape != sigma.shape:
        raise ServeError(
            f"model produced {restored.shape}, input was {sigma.shape}"
        )
    restored = np.where(np.isfinite(sigma), restored, np.nan).astype(np.float32)

    out_path = root / request["output"]
    write_tgr(out_path, restored, ambient, res)
    return out_path


def serve_batch(batch_dir, model=None, checkpoint=None) -> list[Path]:
    """Process every */request.json under batch_dir in sorted order."""
    batch_dir = Path(batch_dir)
    requests = sorted(batch_dir.glob("*/request.json"))
    if (batch_dir / "request.json").exists():
        requests.insert(0, batch_dir / "request.json")
    if not requests:
        raise ServeError(f"no request manifests under {batch_dir}")
    if model is None:
        if checkpoint is None:
            raise ServeError("no model or checkpoint given")
        model, _ = load_checkpoint(checkpoint)
    return [serve_request(req, model=model) for req in requests]
