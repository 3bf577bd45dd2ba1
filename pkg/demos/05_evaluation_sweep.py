"""A small evaluation sweep
===========================

Runs the full pipeline over a few densities and seeds, scoring the single
center image, the raw integral, and the analytically corrected integral
against ground truth in both temperature regimes, then writes the CSV and
summary plots. Scale the seed count up for smoother curves.
"""

from pathlib import Path

from thermosa.evaluate import SweepConfig, mean_rmse, run_sweep

out_dir = Path(__file__).parent / "output" / "sweep"
out_dir.mkdir(parents=True, exist_ok=True)

config = SweepConfig(
    densities_tpha=(220.0, 585.0, 950.0),
    ambients_c=(15.0,),
    seeds=tuple(range(4)),
    resolution=192,
    sa_n=5,
    sa_m=5,
)
records = run_sweep(config, csv_path=out_dir / "records.csv", plot_dir=out_dir)
print(f"{len(records)} records -> {out_dir / 'records.csv'}")

for method in ("single", "integral", "corrected"):
    v = mean_rmse(records, method=method, regime="full", sa_type="2d")
    print(f"mean RMSE, full regime, 2D, {method:10s}: {v:6.2f} degC")
