"""End-to-end CLI behavior: subcommands, exit codes, manifests, determinism."""

import json
import subprocess
import sys

import numpy as np
import pytest

from thermosa.cli import main
from thermosa.integration import SAGrid, integrate
from thermosa.raster import TemperatureRaster, read_raster, write_raster

BASE_PARAMS = {
    "seed": 5,
    "ambient_c": 15.0,
    "size": 64,
    "surface_size": 128,
    "surface_cover_m": 28.8,
    "hotspots": [{"center": [1.0, -2.0], "radius_m": 1.0, "peak_c": 70.0}],
    "forest": {"density_tpha": 300.0, "extent_m": 26.0, "leaf_area_density": 0.3},
    "env": {"sun_absorption_c": 5.0, "solar_angle_deg": 10.0},
    "grid": {"n": 3, "m": 3, "spacing_m": 2.0, "altitude_agl_m": 35.0},
}


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def make_dataset(tmp_path, capsys, name="ds", overrides=None):
    params = json.loads(json.dumps(BASE_PARAMS))
    for key, value in (overrides or {}).items():
        if isinstance(params.get(key), dict):
            params[key].update(value)
        else:
            params[key] = value
    pfile = tmp_path / f"{name}_params.json"
    pfile.write_text(json.dumps(params))
    out = tmp_path / name
    code, summary = run_cli(capsys, "simulate", "--params", str(pfile), "--out", str(out))
    assert code == 0, summary
    return out, summary


class TestSimulate:
    def test_dataset_layout_and_summary(self, tmp_path, capsys):
        out, summary = make_dataset(tmp_path, capsys)
        assert summary["images"] == 9
        assert len(list((out / "images").glob("*.tgr"))) == 9
        assert len(list((out / "masks").glob("*.tgr"))) == 9
        for name in ("poses.json", "truth.tgr", "surface.tgr", "scene.json", "run_manifest.json"):
            assert (out / name).exists()

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        a, _ = make_dataset(tmp_path, capsys, "a")
        b, _ = make_dataset(tmp_path, capsys, "b")
        for rel in ["truth.tgr", "surface.tgr", "poses.json", "images/img_01_01.tgr"]:
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel

    def test_manifest_reruns_identically(self, tmp_path, capsys):
        a, _ = make_dataset(tmp_path, capsys, "a")
        out2 = tmp_path / "from_manifest"
        code, _ = run_cli(
            capsys, "simulate", "--params", str(a / "run_manifest.json"), "--out", str(out2)
        )
        assert code == 0
        assert (a / "truth.tgr").read_bytes() == (out2 / "truth.tgr").read_bytes()

    def test_density_zero_center_image_equals_truth(self, tmp_path, capsys):
        out, _ = make_dataset(tmp_path, capsys, "flat", {"forest": {"density_tpha": 0.0}})
        center = read_raster(out / "images" / "img_01_01.tgr")
        truth = read_raster(out / "truth.tgr")
        assert np.array_equal(center.data, truth.data)
        mask = read_raster(out / "masks" / "mask_01_01.tgr")
        assert (mask.data == 1.0).all()

    def test_default_grid_emits_121_images(self, tmp_path, capsys):
        out, summary = make_dataset(
            tmp_path, capsys, "full",
            {
                "size": 32,
                "surface_size": 128,
                "surface_cover_m": 51.2,
                "hotspots": [],
                "forest": {"density_tpha": 50.0, "extent_m": 48.0, "leaf_area_density": 0.1},
                "grid": {"n": 11, "m": 11, "spacing_m": 2.0, "altitude_agl_m": 35.0},
            },
        )
        assert summary["images"] == 121
        assert len(list((out / "images").glob("*.tgr"))) == 121
        assert len(json.loads((out / "poses.json").read_text())) == 121

    def test_bad_params_key_usage_error(self, tmp_path, capsys):
        pfile = tmp_path / "bad.json"
        pfile.write_text(json.dumps({"nonsense": 1}))
        code, _ = run_cli(capsys, "simulate", "--params", str(pfile), "--out", str(tmp_path / "x"))
        assert code == 2

    def test_invalid_json_format_error(self, tmp_path, capsys):
        pfile = tmp_path / "bad.json"
        pfile.write_text("{not json")
        code, _ = run_cli(capsys, "simulate", "--params", str(pfile), "--out", str(tmp_path / "x"))
        assert code == 3


class TestIntegrate:
    @pytest.fixture()
    def dataset(self, tmp_path, capsys):
        out, _ = make_dataset(tmp_path, capsys)
        return out

    def test_single_window_2d(self, dataset, capsys):
        code, summary = run_cli(capsys, "integrate", str(dataset), "--sa", "2d")
        assert code == 0 and summary["windows"] == 1
        sigma = read_raster(dataset / "integrals" / "sigma_2d.tgr")
        counts = read_raster(dataset / "integrals" / "counts_2d.tgr")
        assert sigma.data.shape == (64, 64)
        assert counts.data.max() == 9
        assert (dataset / "integrals" / "fmask_2d.tgr").exists()

    def test_1d_row_matches_direct_integration(self, dataset, capsys):
        code, _ = run_cli(capsys, "integrate", str(dataset), "--sa", "1d-row")
        assert code == 0
        entries = json.loads((dataset / "poses.json").read_text())
        from thermosa.integration import CameraPose

        images = []
        for rec in entries:
            if rec["index"][1] != 1:
                continue
            img = read_raster(dataset / rec["image"])
            pose = CameraPose(tuple(rec["position_m"]), rec["yaw_deg"], rec["fov_deg"], 64, 64)
            images.append((img, pose))
        grid = SAGrid(3, 1, 2.0, 35.0, (0.0, 0.0))
        want = integrate(images, grid)
        got = read_raster(dataset / "integrals" / "sigma_1d-row.tgr")
        assert np.array_equal(got.data, want.raster.data.astype(np.float32), equal_nan=True)

    def test_sliding_window_count(self, dataset, capsys, tmp_path):
        code, summary = run_cli(
            capsys, "integrate", str(dataset), "--sa", "2d",
            "--window", "3", "1", "--out", str(tmp_path / "win"),
        )
        assert code == 0 and summary["windows"] == 3  # (3-3+1) x (3-1+1)
        code, summary = run_cli(
            capsys, "integrate", str(dataset), "--sa", "2d",
            "--window", "3", "1", "--stride", "2", "--out", str(tmp_path / "win2"),
        )
        assert code == 0 and summary["windows"] == 2

    def test_missing_waypoint_named(self, dataset, capsys):
        entries = json.loads((dataset / "poses.json").read_text())
        dropped = [rec for rec in entries if rec["index"] != [2, 2]]
        (dataset / "poses.json").write_text(json.dumps(dropped))
        code, _ = run_cli(capsys, "integrate", str(dataset))
        assert code == 3


class TestCorrectDetectEvaluate:
    def test_correct_identity_with_full_visibility(self, tmp_path, capsys):
        rng = np.random.default_rng(0)
        sigma = TemperatureRaster(rng.uniform(0, 80, (16, 16)).astype(np.float32), 13.0, 0.1)
        ones = TemperatureRaster(np.ones((16, 16), dtype=np.float32), 13.0, 0.1)
        write_raster(sigma, tmp_path / "sigma.tgr")
        write_raster(ones, tmp_path / "f.tgr")
        code, summary = run_cli(
            capsys, "correct", "--input", str(tmp_path / "sigma.tgr"),
            "--mask", str(tmp_path / "f.tgr"), "--out", str(tmp_path / "prime.tgr"),
        )
        assert code == 0
        assert summary["low_confidence_px"] == 0 and summary["clamped_px"] == 0
        out = read_raster(tmp_path / "prime.tgr")
        assert np.array_equal(out.data, sigma.data)
        assert (tmp_path / "prime.tgr.manifest.json").exists()

    def test_correct_missing_mask_usage_error(self, tmp_path, capsys):
        sigma = TemperatureRaster(np.zeros((4, 4), dtype=np.float32), 13.0, 0.1)
        write_raster(sigma, tmp_path / "sigma.tgr")
        code, _ = run_cli(
            capsys, "correct", "--input", str(tmp_path / "sigma.tgr"),
            "--out", str(tmp_path / "prime.tgr"),
        )
        assert code == 2

    def test_correct_external_echo(self, tmp_path, capsys):
        from test_correction import ECHO_BODY, write_backend

        cmd = write_backend(tmp_path, "echo.py", ECHO_BODY)
        sigma = TemperatureRaster(np.full((8, 8), 42.0, dtype=np.float32), 13.0, 0.1)
        write_raster(sigma, tmp_path / "sigma.tgr")
        code, summary = run_cli(
            capsys, "correct", "--input", str(tmp_path / "sigma.tgr"),
            "--backend", " ".join(cmd), "--out", str(tmp_path / "prime.tgr"),
            "--exchange-dir", str(tmp_path / "xchg"),
        )
        assert code == 0
        assert np.array_equal(read_raster(tmp_path / "prime.tgr").data, sigma.data)

    def test_correct_backend_failure_exit_code(self, tmp_path, capsys):
        from test_correction import write_backend

        cmd = write_backend(tmp_path, "fail.py", "import sys; sys.exit(9)\n")
        sigma = TemperatureRaster(np.zeros((4, 4), dtype=np.float32), 13.0, 0.1)
        write_raster(sigma, tmp_path / "sigma.tgr")
        code, _ = run_cli(
            capsys, "correct", "--input", str(tmp_path / "sigma.tgr"),
            "--backend", " ".join(cmd), "--out", str(tmp_path / "prime.tgr"),
        )
        assert code == 4

    def test_detect_uniform_empty(self, tmp_path, capsys):
        r = TemperatureRaster(np.full((8, 8), 20.0, dtype=np.float32), 15.0, 0.1)
        write_raster(r, tmp_path / "r.tgr")
        code, summary = run_cli(capsys, "detect", "--input", str(tmp_path / "r.tgr"))
        assert code == 0 and summary["hotspots"] == []

    def test_detect_reports_components(self, tmp_path, capsys):
        data = np.full((8, 8), 20.0, dtype=np.float32)
        data[2:4, 2:4] = 80.0
        write_raster(TemperatureRaster(data, 15.0, 0.5), tmp_path / "r.tgr")
        code, summary = run_cli(
            capsys, "detect", "--input", str(tmp_path / "r.tgr"),
            "--out", str(tmp_path / "spots.json"),
        )
        assert code == 0
        assert len(summary["hotspots"]) == 1
        assert summary["hotspots"][0]["area_px"] == 4
        assert json.loads((tmp_path / "spots.json").read_text()) == summary["hotspots"]

    def test_evaluate_identical_rasters(self, tmp_path, capsys):
        r = TemperatureRaster(np.arange(16, dtype=np.float32).reshape(4, 4), 15.0, 0.1)
        write_raster(r, tmp_path / "a.tgr")
        write_raster(r, tmp_path / "b.tgr")
        code, summary = run_cli(
            capsys, "evaluate", "--pred", str(tmp_path / "a.tgr"),
            "--truth", str(tmp_path / "b.tgr"),
        )
        assert code == 0 and summary["rmse"] == 0.0

    def test_evaluate_requires_pair_or_sweep(self, capsys):
        code, _ = run_cli(capsys, "evaluate")
        assert code == 2

    def test_evaluate_bad_raster_format_error(self, tmp_path, capsys):
        (tmp_path / "junk.tgr").write_bytes(b"XXXX" + b"\x00" * 32)
        code, _ = run_cli(
            capsys, "evaluate", "--pred", str(tmp_path / "junk.tgr"),
            "--truth", str(tmp_path / "junk.tgr"),
        )
        assert code == 3

    def test_ambient_subcommand(self, tmp_path, capsys):
        for i, val in enumerate((10.0, 16.0)):
            write_raster(
                TemperatureRaster(np.full((4, 4), val, dtype=np.float32), 0.0, 0.1),
                tmp_path / f"{i}.tgr",
            )
        code, summary = run_cli(
            capsys, "ambient", str(tmp_path / "0.tgr"), str(tmp_path / "1.tgr")
        )
        assert code == 0 and summary["ambient_c"] == pytest.approx(13.0)


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "thermosa.cli", "--version"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip()
