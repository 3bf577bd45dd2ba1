"""Command-line entry point for batch pipeline runs.

Subcommands mirror the pipeline stages: simulate a flight dataset,
integrate it into synthetic-aperture integrals, correct an integral,
detect hotspots, and evaluate errors or whole parameter sweeps. Every
output set gets a run manifest with the fully resolved parameters, and
re-running a manifest reproduces the outputs byte for byte.

stdout carries exactly one JSON summary per invocation; diagnostics go to
stderr. Exit codes: 0 success, 2 usage/parameters, 3 data format,
4 backend, 5 internal.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .correction import (
    EXCHANGE_DIR_ENV,
    CorrectionInput,
    correct_analytic,
    correct_external,
    estimate_ambient,
)
from .errors import (
    BackendError,
    CapabilityError,
    EmptySelectionError,
    FormatError,
    ParameterError,
    ThermosaError,
)
from .evaluate import (
    REGIMES,
    SweepConfig,
    detect_hotspots,
    plot_sweep,
    rmse,
    run_sweep,
    write_records_csv,
)
from .forest import ForestParams, ThermalEnv, build_scene, export_scene_json, ground_truth_view, render_thermal
from .integration import (
    DEFAULT_FOV_DEG,
    CameraPose,
    SAGrid,
    integrate,
    integrate_mask,
    load_pose_manifest,
    save_pose_manifest,
    sliding_integrate,
)
from .raster import RegimeMask, TemperatureRaster, read_raster, write_raster
from .surface import AugmentationParams, HotspotSpec, augment_raster, gen_surface_field

log = logging.getLogger("thermosa.cli")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FORMAT = 3
EXIT_BACKEND = 4
EXIT_INTERNAL = 5


def emit(summary: dict) -> None:
    sys.stdout.write(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_manifest(path: Path, subcommand: str, parameters: dict, outputs: list) -> None:
    manifest = {
        "tool": "thermosa",
        "version": __version__,
        "subcommand": subcommand,
        "parameters": parameters,
        "outputs": sorted(str(o) for o in outputs),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ------------------------------------------------------------------ simulate

SIMULATE_DEFAULTS = {
    "seed": 0,
    "ambient_c": 15.0,
    "size": 512,
    "surface_size": 512,
    "surface_cover_m": 51.2,
    "hotspots": [],
    "augmentation": {
        "source_ambient_c": 9.0,
        "alpha": 0.5,
        "t_lower_c": 0.0,
        "t_max_c": 98.0,
        "t_max_target_c": 300.0,
    },
    "forest": {"density_tpha": 585.0, "extent_m": 48.0, "leaf_area_density": 0.8},
    "env": {"sun_absorption_c": 7.0, "solar_angle_deg": 0.0},
    "grid": {"n": 11, "m": 11, "spacing_m": 2.0, "altitude_agl_m": 35.0},
    "supersample": 1,
    "yaw_deg": 0.0,
}


def _resolved_simulate_params(raw: dict) -> dict:
    if "subcommand" in raw:  # a run manifest: re-run it
        if raw.get("subcommand") != "simulate":
            raise ParameterError(f"manifest is for '{raw.get('subcommand')}', not simulate")
        raw = raw["parameters"]
    params = json.loads(json.dumps(SIMULATE_DEFAULTS))  # deep copy
    for key, value in raw.items():
        if key not in params:
            raise ParameterError(f"unknown simulate parameter {key!r}")
        if isinstance(params[key], dict):
            unknown = set(value) - set(params[key])
            if unknown:
                raise ParameterError(f"unknown keys in {key!r}: {sorted(unknown)}")
            params[key].update(value)
        else:
            params[key] = value
    return params


def cmd_simulate(args) -> int:
    raw = json.loads(Path(args.params).read_text())
    params = _resolved_simulate_params(raw)
    if args.seed is not None:
        params["seed"] = args.seed

    out = Path(args.out)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)

    aug_cfg = params["augmentation"]
    hotspots = [
        HotspotSpec(
            center=tuple(h["center"]),
            radius_m=h["radius_m"],
            peak_c=h["peak_c"],
            falloff=h.get("falloff", 3.0),
        )
        for h in params["hotspots"]
    ]
    surface_res = params["surface_cover_m"] / params["surface_size"]
    source = gen_surface_field(
        params["seed"],
        aug_cfg["source_ambient_c"],
        params["surface_size"],
        hotspots,
        ground_res_m=surface_res,
        t_lower_c=aug_cfg["t_lower_c"],
    )
    aug = AugmentationParams.for_ambient(
        params["ambient_c"],
        source_ambient_c=aug_cfg["source_ambient_c"],
        t_max_c=aug_cfg["t_max_c"],
        t_max_target_c=aug_cfg["t_max_target_c"],
        alpha=aug_cfg["alpha"],
        t_lower_c=aug_cfg["t_lower_c"],
    )
    surface = augment_raster(source, aug)

    env = ThermalEnv(params["ambient_c"], **params["env"])
    forest = ForestParams(seed=params["seed"], **params["forest"])
    scene = build_scene(forest, surface, env)

    grid_cfg = params["grid"]
    grid = SAGrid(
        grid_cfg["n"], grid_cfg["m"], grid_cfg["spacing_m"], grid_cfg["altitude_agl_m"]
    )
    poses = grid.poses(resolution=params["size"], yaw_deg=params["yaw_deg"])

    entries = []
    outputs = []
    for (i, j), pose in sorted(poses.items()):
        img, mask = render_thermal(scene, pose, supersample=params["supersample"])
        img_rel = f"images/img_{i:02d}_{j:02d}.tgr"
        mask_rel = f"masks/mask_{i:02d}_{j:02d}.tgr"
        write_raster(img, out / img_rel)
        write_raster(mask, out / mask_rel)
        outputs += [img_rel, mask_rel]
        entries.append(
            {
                "index": [i, j],
                "position_m": list(pose.position),
                "yaw_deg": pose.yaw_deg,
                "fov_deg": pose.fov_deg,
                "image": img_rel,
                "mask": mask_rel,
            }
        )

    truth = ground_truth_view(surface, poses[grid.center_index])
    write_raster(truth, out / "truth.tgr")
    write_raster(surface, out / "surface.tgr")
    save_pose_manifest(out / "poses.json", entries)
    export_scene_json(scene, out / "scene.json")
    outputs += ["truth.tgr", "surface.tgr", "poses.json", "scene.json"]
    write_manifest(out / "run_manifest.json", "simulate", params, outputs)

    emit(
        {
            "dataset": str(out),
            "images": len(entries),
            "seed": params["seed"],
            "ambient_c": params["ambient_c"],
            "tree_count": scene.n_trees,
        }
    )
    return EXIT_OK


# ----------------------------------------------------------------- integrate

def _load_dataset(dataset: Path):
    manifest_path = dataset / "poses.json"
    if not manifest_path.exists():
        raise FormatError(f"dataset has no pose manifest: {manifest_path}")
    entries = load_pose_manifest(manifest_path)
    by_index = {}
    for rec in entries:
        i, j = rec["index"]
        pose_kwargs = dict(
            position=tuple(rec["position_m"]),
            yaw_deg=rec["yaw_deg"],
            fov_deg=rec.get("fov_deg", DEFAULT_FOV_DEG),
        )
        image = read_raster(dataset / rec["image"])
        pose = CameraPose(width=image.width, height=image.height, **pose_kwargs)
        mask = read_raster(dataset / rec["mask"]) if rec.get("mask") else None
        by_index[(i, j)] = (image, mask, pose)
    if not by_index:
        raise FormatError(f"pose manifest {manifest_path} lists no waypoints")
    n = 1 + max(i for i, _ in by_index)
    m = 1 + max(j for _, j in by_index)
    missing = [(i, j) for i in range(n) for j in range(m) if (i, j) not in by_index]
    if missing:
        raise FormatError(f"pose manifest is missing waypoint {missing[0]} of {n}x{m}")
    return by_index, n, m


def _infer_grid(by_index, n, m) -> SAGrid:
    xs = sorted({by_index[(i, 0)][2].position[0] for i in range(n)})
    ys = sorted({by_index[(0, j)][2].position[1] for j in range(m)})
    spacing = xs[1] - xs[0] if n > 1 else (ys[1] - ys[0] if m > 1 else 2.0)
    alt = by_index[(0, 0)][2].position[2]
    center = ((xs[0] + xs[-1]) / 2.0, (ys[0] + ys[-1]) / 2.0)
    return SAGrid(n, m, spacing, alt, center)


def cmd_integrate(args) -> int:
    dataset = Path(args.dataset)
    by_index, n, m = _load_dataset(dataset)
    grid = _infer_grid(by_index, n, m)
    out = Path(args.out) if args.out else dataset / "integrals"
    out.mkdir(parents=True, exist_ok=True)

    ci, cj = grid.center_index
    if args.sa == "2d":
        keys = sorted(by_index)
        sub = grid
    elif args.sa == "1d-row":
        keys = [(i, cj) for i in range(n)]
        sub = SAGrid(n, 1, grid.spacing_m, grid.altitude_agl_m,
                     (grid.center_xy[0], by_index[(0, cj)][2].position[1]))
    elif args.sa == "1d-col":
        keys = [(ci, j) for j in range(m)]
        sub = SAGrid(1, m, grid.spacing_m, grid.altitude_agl_m,
                     (by_index[(ci, 0)][2].position[0], grid.center_xy[1]))
    else:  # pragma: no cover - argparse restricts choices
        raise ParameterError(f"unknown --sa {args.sa}")

    images = [(by_index[k][0], by_index[k][2]) for k in keys]
    masks = [
        (by_index[k][1], by_index[k][2]) for k in keys if by_index[k][1] is not None
    ]

    window = sub
    if args.window is not None:
        wn, wm = args.window
        window = SAGrid(wn, wm, sub.spacing_m, sub.altitude_agl_m)
    outputs = []
    if args.window is None:
        results = [integrate(images, sub)]
    else:
        grid_2d = [
            [
                (by_index[(i, j)][0], by_index[(i, j)][2])
                for j in ([cj] if args.sa == "1d-row" else range(m))
            ]
            for i in ([ci] if args.sa == "1d-col" else range(n))
        ]
        results = sliding_integrate(grid_2d, window, stride=(args.stride, args.stride))

    summaries = []
    for k, result in enumerate(results):
        tag = "" if len(results) == 1 else f"_{k:03d}"
        sigma_rel = f"sigma_{args.sa}{tag}.tgr"
        counts_rel = f"counts_{args.sa}{tag}.tgr"
        write_raster(result.raster, out / sigma_rel)
        counts = result.counts.astype(np.float32)
        write_raster(
            TemperatureRaster(counts, result.raster.ambient_c, result.raster.ground_res_m),
            out / counts_rel,
        )
        outputs += [sigma_rel, counts_rel]
        summaries.append({"sigma": sigma_rel, "counts": counts_rel})

    fmask_rel = None
    if masks and args.window is None and len(masks) == len(images):
        fmask = integrate_mask(masks, sub)
        fmask_rel = f"fmask_{args.sa}.tgr"
        write_raster(fmask, out / fmask_rel)
        outputs.append(fmask_rel)

    write_manifest(
        out / f"run_manifest_{args.sa}.json",
        "integrate",
        # Dataset recorded relative to this manifest so reruns of the same
        # layout are byte-identical wherever the tree lives.
        {"dataset": os.path.relpath(dataset, out), "sa": args.sa,
         "stride": args.stride,
         "window": list(args.window) if args.window else None},
        outputs,
    )
    emit(
        {
            "out": str(out),
            "sa": args.sa,
            "integrals": summaries,
            "mask": fmask_rel,
            "windows": len(results),
        }
    )
    return EXIT_OK


# ------------------------------------------------------------------- correct

def cmd_correct(args) -> int:
    sigma = read_raster(args.input)
    mask = read_raster(args.mask) if args.mask else None
    ambient = args.ambient if args.ambient is not None else sigma.ambient_c
    inp = CorrectionInput(
        sigma, ambient, mask=mask,
        veg_ref_c=args.veg_ref, sun_absorption_c=args.sun_absorption,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)

    if args.backend == "analytic":
        result = correct_analytic(inp, f_min=args.f_min)
        write_raster(result.raster, out)
        summary = {
            "backend": "analytic",
            "output": str(out),
            "low_confidence_px": int(result.low_confidence.sum()),
            "clamped_px": int(result.clamped.sum()),
        }
    else:
        corrected = correct_external(
            inp,
            shlex.split(args.backend),
            exchange_dir=args.exchange_dir,
            timeout_s=args.timeout,
        )
        write_raster(corrected, out)
        summary = {"backend": args.backend, "output": str(out)}

    write_manifest(
        out.with_suffix(out.suffix + ".manifest.json"),
        "correct",
        {
            "input": str(args.input), "mask": str(args.mask) if args.mask else None,
            "backend": args.backend, "ambient_c": ambient, "f_min": args.f_min,
        },
        [str(out)],
    )
    emit(summary)
    return EXIT_OK


# -------------------------------------------------------------------- detect

def cmd_detect(args) -> int:
    raster = read_raster(args.input)
    spots = detect_hotspots(raster, threshold_c=args.threshold)
    payload = [
        {
            "area_px": s.area_px,
            "area_m2": s.area_m2,
            "centroid_xy_m": list(s.centroid_xy),
            "mean_c": s.mean_c,
            "max_c": s.max_c,
            "bbox_px": list(s.bbox_px),
        }
        for s in spots
    ]
    if args.out:
        Path(args.out).write_text(json.dumps(payload, indent=2) + "\n")
    emit({"input": str(args.input), "threshold_c": args.threshold, "hotspots": payload})
    return EXIT_OK


# ------------------------------------------------------------------ evaluate

def _parse_regime(text):
    if text in REGIMES:
        return REGIMES[text]
    if text == "none":
        return None
    try:
        lo, hi = (float(part) for part in text.split(","))
    except Exception as exc:
        raise ParameterError(f"bad regime {text!r}; use full, fire, none, or lo,hi") from exc
    return RegimeMask(lo, hi)


def cmd_evaluate(args) -> int:
    if args.sweep:
        cfg_raw = json.loads(Path(args.sweep).read_text())
        lists = {k: tuple(v) for k, v in cfg_raw.items()
                 if k in ("densities_tpha", "ambients_c", "seeds", "sa_types")}
        scalars = {k: v for k, v in cfg_raw.items()
                   if k in ("resolution", "surface_size", "sa_n", "sa_m", "supersample", "f_min")}
        overrides = cfg_raw.get("flight_overrides", {})
        config = SweepConfig(**lists, **scalars, flight_overrides=overrides)
        out = Path(args.out or "sweep_out")
        out.mkdir(parents=True, exist_ok=True)
        records = run_sweep(config, jobs=args.jobs)
        csv_path = out / "records.csv"
        write_records_csv(records, csv_path)
        plots = plot_sweep(records, out) if args.plots else []
        write_manifest(out / "run_manifest.json", "evaluate", cfg_raw,
                       ["records.csv"] + [p.name for p in plots])
        emit({"records": len(records), "csv": str(csv_path),
              "plots": [str(p) for p in plots]})
        return EXIT_OK

    if not args.pred or not args.truth:
        raise ParameterError("pair mode needs --pred and --truth (or use --sweep)")
    pred = read_raster(args.pred)
    truth = read_raster(args.truth)
    regime = _parse_regime(args.regime)
    err = rmse(pred, truth, regime)
    emit({"pred": str(args.pred), "truth": str(args.truth),
          "regime": args.regime, **err})
    return EXIT_OK


def cmd_ambient(args) -> int:
    rasters = [read_raster(p) for p in args.inputs]
    emit({"ambient_c": estimate_ambient(rasters), "images": len(rasters)})
    return EXIT_OK


# --------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="thermosa",
        description="Simulate, integrate, correct, and evaluate occluded "
        "thermal surface imagery.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render one synthetic-aperture flight dataset")
    p.add_argument("--params", required=True, help="JSON parameter file (or a run manifest)")
    p.add_argument("--out", required=True, help="dataset output directory")
    p.add_argument("--seed", type=int, default=None, help="override the params seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("integrate", help="integrate a dataset into aperture integrals")
    p.add_argument("dataset", help="dataset directory from simulate")
    p.add_argument("--sa", choices=("2d", "1d-row", "1d-col"), default="2d")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--window", type=int, nargs=2, metavar=("N", "M"), default=None,
                   help="sliding window size; omit for single-window mode")
    p.add_argument("--out", default=None, help="output directory (default: dataset/integrals)")
    p.set_defaults(func=cmd_integrate)

    p = sub.add_parser("correct", help="correct an integral raster")
    p.add_argument("--input", required=True, help="sigma TGR1 file")
    p.add_argument("--mask", default=None, help="visibility-fraction TGR1 file")
    p.add_argument("--backend", default="analytic",
                   help="'analytic' or an external backend command line")
    p.add_argument("--out", required=True, help="corrected TGR1 output path")
    p.add_argument("--ambient", type=float, default=None,
                   help="ambient degC (default: the input header)")
    p.add_argument("--veg-ref", type=float, default=None, dest="veg_ref")
    p.add_argument("--sun-absorption", type=float, default=0.0, dest="sun_absorption")
    p.add_argument("--f-min", type=float, default=0.1, dest="f_min")
    p.add_argument("--exchange-dir", default=None,
                   help=f"exchange directory (default: ${EXCHANGE_DIR_ENV} or temp)")
    p.add_argument("--timeout", type=float, default=60.0)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("detect", help="detect hotspots in a raster")
    p.add_argument("--input", required=True)
    p.add_argument("--threshold", type=float, default=50.0)
    p.add_argument("--out", default=None, help="also write the JSON list here")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="score rasters or run a parameter sweep")
    p.add_argument("--pred", help="prediction TGR1 (pair mode)")
    p.add_argument("--truth", help="ground-truth TGR1 (pair mode)")
    p.add_argument("--regime", default="none", help="full, fire, none, or lo,hi")
    p.add_argument("--sweep", default=None, help="sweep config JSON (sweep mode)")
    p.add_argument("--out", default=None, help="sweep output directory")
    p.add_argument("--plots", action="store_true", help="write sweep plots")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ambient", help="estimate ambient temperature from images")
    p.add_argument("inputs", nargs="+", help="TGR1 files")
    p.set_defaults(func=cmd_ambient)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, EmptySelectionError, CapabilityError) as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except FormatError as exc:
        log.error("%s", exc)
        return EXIT_FORMAT
    except BackendError as exc:
        log.error("%s", exc)
        return EXIT_BACKEND
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        log.error("invalid JSON: %s", exc)
        return EXIT_FORMAT
    except ThermosaError as exc:
        log.error("%s", exc)
        return EXIT_INTERNAL
    except Exception:
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
