"""Surface-temperature fields and ambient re-targeting
======================================================

Generates an occlusion-free ground-truth field with fire hotspots, then
re-targets it to different ambient temperatures and fire ranges. Non-fire
pixels shift with a smooth sigmoid weight; fire pixels rescale linearly
with a fixed point at the potential-fire bound.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from thermosa.surface import AugmentationParams, HotspotSpec, augment_raster, gen_surface_field

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

# A field recorded at 9 degC ambient: background texture plus three fires.
hotspots = [
    HotspotSpec(center=(-8.0, 6.0), radius_m=2.0, peak_c=98.0),
    HotspotSpec(center=(5.0, -4.0), radius_m=1.2, peak_c=60.0),
    HotspotSpec(center=(12.0, 10.0), radius_m=0.8, peak_c=45.0),
]
source = gen_surface_field(seed=42, ambient_c=9.0, size=512, hotspots=hotspots)
print(f"source field: min {source.data.min():.1f}, max {source.data.max():.1f} degC")

# Re-target: ambient 9 -> 24 degC, fires rescaled so 98 maps onto 300.
params = AugmentationParams.for_ambient(24.0, t_max_target_c=300.0)
augmented = augment_raster(source, params)
print(f"augmented:   min {augmented.data.min():.1f}, max {augmented.data.max():.1f} degC")

fig, axes = plt.subplots(1, 2, figsize=(11, 4.6))
for ax, raster, title in (
    (axes[0], source, "source (ambient 9 degC, fires to 98)"),
    (axes[1], augmented, "augmented (ambient 24 degC, fires to 300)"),
):
    im = ax.imshow(raster.data, cmap="inferno", vmin=0, vmax=300)
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="degC")
fig.tight_layout()
fig.savefig(out_dir / "surface_fields.png", dpi=120)
print(f"wrote {out_dir / 'surface_fields.png'}")

# The sigmoid weight keeps the shift away from freezing and fire pixels:
# sweep a scalar temperature through the augmentation to see the rolloff.
from thermosa.surface import augment_nonfire, sigmoid_weight

ts = np.linspace(-20, 60, 400)
ws = sigmoid_weight(ts, params)
fig, ax = plt.subplots(figsize=(6, 3.2))
ax.plot(ts, ws)
ax.set_xlabel("temperature (degC)")
ax.set_ylabel("shift weight w(t)")
ax.axvline(params.t_lower_c, ls=":", c="gray")
ax.axvline(params.t_upper_c, ls=":", c="gray")
fig.tight_layout()
fig.savefig(out_dir / "shift_weight.png", dpi=120)
print(f"wrote {out_dir / 'shift_weight.png'}")
