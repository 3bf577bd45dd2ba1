"""Procedural forests over a thermal surface
=============================================

Scatters parameterized trees over the surface field and renders nadir
thermal views with ground-visibility masks. Raising the stand density
buries more of the surface signal under canopy radiation.
"""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from thermosa.forest import ForestParams, ThermalEnv, build_scene, render_thermal
from thermosa.integration import CameraPose
from thermosa.surface import AugmentationParams, HotspotSpec, augment_raster, gen_surface_field

out_dir = Path(__file__).parent / "output"
out_dir.mkdir(exist_ok=True)

surface = augment_raster(
    gen_surface_field(7, 9.0, 512, [HotspotSpec((0.0, 0.0), 1.5, 80.0)]),
    AugmentationParams.for_ambient(15.0),
)
env = ThermalEnv(ambient_c=15.0, sun_absorption_c=7.0, solar_angle_deg=30.0)
pose = CameraPose((0.0, 0.0, 35.0), width=256, height=256)

fig, axes = plt.subplots(2, 3, figsize=(13, 8))
for col, density in enumerate((220, 585, 950)):
    scene = build_scene(ForestParams(density_tpha=density, extent_m=48.0, seed=3), surface, env)
    image, mask = render_thermal(scene, pose)
    axes[0][col].imshow(image.data, cmap="inferno", vmin=10, vmax=40)
    axes[0][col].set_title(f"{density} trees/ha ({scene.n_trees} trees)")
    axes[1][col].imshow(mask.data, cmap="gray", vmin=0, vmax=1)
    axes[1][col].set_title(f"ground visible: {mask.data.mean():.0%}")
for ax in axes.ravel():
    ax.set_xticks([])
    ax.set_yticks([])
fig.tight_layout()
fig.savefig(out_dir / "forest_density.png", dpi=120)
print(f"wrote {out_dir / 'forest_density.png'}")
