"""Restoration network: a small multi-scale encoder-decoder.

Maps an occlusion-suppressed integral (normalized around the known ambient
temperature) to the occlusion-free surface field. The ambient scalar is
injected at every level as a feature-wise affine modulation, and the head
predicts a residual on top of the input, so a freshly initialized model is
the exact identity.
"""

from __future__ import annotations

import torch
import torch.nn as nn

NORM_SCALE_C = 150.0  # fixed: absolute temperatures are the target
AMBIENT_SCALE_C = 30.0


def normalize(data: torch.Tensor, ambient_c) -> torch.Tensor:
    """(t - ambient) / 150; inverse is denormalize. Ambient may be a scalar
    or a per-sample tensor broadcast over the image."""
    return (data - _as_field(ambient_c, data)) / NORM_SCALE_C


def denormalize(data: torch.Tensor, ambient_c) -> torch.Tensor:
    return data * NORM_SCALE_C + _as_field(ambient_c, data)


def _as_field(ambient_c, like: torch.Tensor) -> torch.Tensor:
    amb = torch.as_tensor(ambient_c, dtype=like.dtype, device=like.device)
    while amb.dim() < like.dim():
        amb = amb.unsqueeze(-1)
    return amb


class AmbientFiLM(nn.Module):
    """Per-channel affine modulation driven by the ambient temperature."""

    def __init__(self, channels: int):
        super().__init__()
        self.proj = nn.Linear(1, 2 * channels)
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, x: torch.Tensor, ambient: torch.Tensor) -> torch.Tensor:
        gamma, beta = self.proj(ambient.view(-1, 1)).chunk(2, dim=1)
        gamma = gamma.unsqueeze(-1).unsqueeze(-1)
        beta = beta.unsqueeze(-1).unsqueeze(-1)
        return x * (1.0 + gamma) + beta


class ConvBlock(nn.Module):
    def __init__(self, c_in: int, c_out: int):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.film = AmbientFiLM(c_out)
        self.act = nn.LeakyReLU(0.1, inplace=True)

    def forward(self, x, ambient):
        x = self.act(self.conv1(x))
        x = self.act(self.conv2(x))
        return self.film(x, ambient)


class RestorationModel(nn.Module):
    """3-level encoder-decoder with skip connections (~1.6 M parameters)."""

    def __init__(self, base: int = 40):
        super().__init__()
        c1, c2, c3 = base, base * 2, base * 4
        self.enc1 = ConvBlock(1, c1)
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.enc2 = ConvBlock(c2, c2)
        self.down2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)
        self.mid = ConvBlock(c3, c3)
        self.up2 = nn.ConvTranspose2d(c3, c2, 2, stride=2)
        self.dec2 = ConvBlock(c2 * 2, c2)
        self.up1 = nn.ConvTranspose2d(c2, c1, 2, stride=2)
        self.dec1 = ConvBlock(c1 * 2, c1)
        self.head = nn.Conv2d(c1, 1, 3, padding=1)
        # Residual head starts at zero: the untrained model is the identity.
        nn.init.zeros_(self.head.weight)
        nn.init.zeros_(self.head.bias)

    def forward(self, sigma: torch.Tensor, ambient: torch.Tensor) -> torch.Tensor:
        """sigma: (B, 1, H, W) normalized integral; ambient: (B,) scalars
        normalized by AMBIENT_SCALE_C. Output matches the input shape."""
        b, _, h, w = sigma.shape
        pad_h = (-h) % 4
        pad_w = (-w) % 4
        x = nn.functional.pad(sigma, (0, pad_w, 0, pad_h), mode="replicate")

        e1 = self.enc1(x, ambient)
        e2 = self.enc2(self.down1(e1), ambient)
        m = self.mid(self.down2(e2), ambient)
        d2 = self.dec2(torch.cat([self.up2(m), e2], dim=1), ambient)
        d1 = self.dec1(torch.cat([self.up1(d2), e1], dim=1), ambient)
        out = x + self.head(d1)
        return out[:, :, :h, :w]


class FixedFeatureExtractor(nn.Module):
    """Frozen random-convolution features for the perceptual term.

    Pretrained weights are not available in this environment, so the
    extractor uses fixed-seed random filters on the 3-channel-replicated
    thermal image; random projections preserve local structure well enough
    to regularize texture without dictating absolute values.
    """

    def __init__(self, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        layers = []
        c_in = 3
        for c_out in (16, 32, 64):
            conv = nn.Conv2d(c_in, c_out, 3, stride=2, padding=1)
            with torch.no_grad():
                conv.weight.copy_(
                    torch.randn(conv.weight.shape, generator=gen)
                    / (3 * c_in) ** 0.5
                )
                conv.bias.zero_()
            layers += [conv, nn.LeakyReLU(0.2)]
            c_in = c_out
        self.net = nn.Sequential(*layers)
        for p in self.parameters():
            p.requires_grad_(False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x.repeat(1, 3, 1, 1))


CHECKPOINT_VERSION = 1


def save_checkpoint(path, model: RestorationModel, meta: dict | None = None) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "base": model.enc1.conv1.out_channels,
        "norm_scale_c": NORM_SCALE_C,
        "ambient_scale_c": AMBIENT_SCALE_C,
        "state_dict": model.state_dict(),
        "meta": meta or {},
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[RestorationModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    model = RestorationModel(base=payload["base"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload
