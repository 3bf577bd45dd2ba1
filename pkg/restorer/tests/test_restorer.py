"""Unit tests: raster I/O, model contracts, serving, and training smoke."""

import json
import math
import subprocess
import sys

import numpy as np
import pytest
import torch

from restorer.data import TrainingPair, scan_dataset, split_scenes
from restorer.model import (
    AMBIENT_SCALE_C,
    RestorationModel,
    denormalize,
    load_checkpoint,
    normalize,
    save_checkpoint,
)
from restorer.serve import ServeError, serve_batch, serve_request
from restorer.tgr import TgrError, read_tgr, write_tgr
from restorer.train import TrainConfig, TrainingError, train


class TestTgr:
    def test_roundtrip(self, tmp_path):
        data = np.random.default_rng(0).normal(20, 30, (6, 9)).astype(np.float32)
        data[0, 0] = np.nan
        write_tgr(tmp_path / "x.tgr", data, 13.0, 0.25)
        again, ambient, res = read_tgr(tmp_path / "x.tgr")
        assert again.tobytes() == data.tobytes()
        assert ambient == pytest.approx(13.0) and res == pytest.approx(0.25)

    def test_bad_magic(self, tmp_path):
        (tmp_path / "bad.tgr").write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(TgrError):
            read_tgr(tmp_path / "bad.tgr")


class TestNormalization:
    def test_ambient_pixel_is_zero(self):
        assert float(normalize(torch.tensor(15.0), 15.0)) == 0.0

    def test_fixed_scale(self):
        assert float(normalize(torch.tensor(300.0), 0.0)) == pytest.approx(2.0)

    def test_roundtrip_within_tolerance(self):
        x = torch.linspace(-40, 400, 200)
        back = denormalize(normalize(x, 17.0), 17.0)
        assert float((back - x).abs().max()) <= 1e-4


class TestModel:
    def test_identity_at_init(self):
        model = RestorationModel()
        x = torch.randn(1, 1, 32, 32)
        out = model(x, torch.tensor([0.5]))
        assert torch.equal(out, x)

    def test_output_matches_odd_input_sizes(self):
        model = RestorationModel(base=8)
        for h, w in ((15, 22), (33, 31), (64, 64)):
            out = model(torch.randn(2, 1, h, w), torch.tensor([0.1, 0.9]))
            assert out.shape == (2, 1, h, w)

    def test_ambient_conditioning_changes_output(self):
        torch.manual_seed(1)
        model = RestorationModel(base=8)
        with torch.no_grad():  # non-trivial head and FiLM weights
            model.head.weight.normal_(0, 0.1)
            for block in (model.enc1, model.mid):
                block.film.proj.weight.normal_(0, 0.5)
        x = torch.randn(1, 1, 16, 16)
        a_lo = model(x, torch.tensor([0.0]))
        a_hi = model(x, torch.tensor([1.0]))
        assert not torch.allclose(a_lo, a_hi)

    def test_checkpoint_roundtrip(self, tmp_path):
        model = RestorationModel(base=8)
        save_checkpoint(tmp_path / "ck.pt", model, meta={"note": 1})
        again, payload = load_checkpoint(tmp_path / "ck.pt")
        x = torch.randn(1, 1, 16, 16)
        a = torch.tensor([0.4])
        assert torch.equal(model(x, a), again(x, a))
        assert payload["meta"]["note"] == 1


def write_request(root, sigma, ambient=13.0, mask=None, version=1):
    root.mkdir(parents=True, exist_ok=True)
    write_tgr(root / "sigma.tgr", sigma, ambient, 0.1)
    request = {"version": version, "ambient_c": ambient,
               "input": "sigma.tgr", "output": "sigma_prime.tgr"}
    if mask is not None:
        write_tgr(root / "f.tgr", mask, ambient, 0.1)
        request["mask"] = "f.tgr"
    (root / "request.json").write_text(json.dumps(request))
    return root / "request.json"


class TestServe:
    @pytest.fixture()
    def checkpoint(self, tmp_path):
        path = tmp_path / "identity.pt"
        save_checkpoint(path, RestorationModel(base=8))
        return path

    def test_untrained_checkpoint_is_identity(self, tmp_path, checkpoint):
        sigma = np.random.default_rng(0).normal(20, 10, (24, 24)).astype(np.float32)
        req = write_request(tmp_path / "r", sigma)
        out_path = serve_request(req, checkpoint=checkpoint)
        out, ambient, _ = read_tgr(out_path)
        assert ambient == pytest.approx(13.0)
        assert np.allclose(out, sigma, atol=1e-4)

    def test_nodata_pixels_preserved(self, tmp_path, checkpoint):
        sigma = np.full((8, 8), 20.0, dtype=np.float32)
        sigma[2, 3] = np.nan
        req = write_request(tmp_path / "r", sigma)
        out, _, _ = read_tgr(serve_request(req, checkpoint=checkpoint))
        assert math.isnan(out[2, 3]) and np.isfinite(out).sum() == 63

    def test_malformed_request_rejected(self, tmp_path, checkpoint):
        bad = tmp_path / "bad" / "request.json"
        bad.parent.mkdir()
        bad.write_text("{}")
        with pytest.raises(ServeError):
            serve_request(bad, checkpoint=checkpoint)

    def test_unsupported_version_rejected(self, tmp_path, checkpoint):
        sigma = np.zeros((4, 4), dtype=np.float32)
        req = write_request(tmp_path / "r", sigma, version=99)
        with pytest.raises(ServeError):
            serve_request(req, checkpoint=checkpoint)

    def test_batch_processes_in_order(self, tmp_path, checkpoint):
        batch = tmp_path / "batch"
        for k in range(10):
            sigma = np.full((6, 6), float(k), dtype=np.float32)
            write_request(batch / f"req_{k:02d}", sigma)
        outs = serve_batch(batch, checkpoint=checkpoint)
        assert len(outs) == 10
        got = [float(read_tgr(o)[0][0, 0]) for o in outs]
        assert np.allclose(got, np.arange(10.0), atol=1e-4)

    def test_cli_serve_exit_codes(self, tmp_path, checkpoint):
        sigma = np.full((6, 6), 9.0, dtype=np.float32)
        req = write_request(tmp_path / "ok", sigma)
        good = subprocess.run(
            [sys.executable, "-m", "restorer.cli", "serve",
             "--request", str(req), "--checkpoint", str(checkpoint)],
            capture_output=True, text=True,
        )
        assert good.returncode == 0, good.stderr
        assert json.loads(good.stdout)["output"]

        bad = tmp_path / "bad" / "request.json"
        bad.parent.mkdir()
        bad.write_text("{broken")
        failed = subprocess.run(
            [sys.executable, "-m", "restorer.cli", "serve",
             "--request", str(bad), "--checkpoint", str(checkpoint)],
            capture_output=True, text=True,
        )
        assert failed.returncode == 4
        assert "error" in json.loads(failed.stderr.strip().splitlines()[-1])


def synth_dataset(root, n_scenes, size=24, identity=True, seed=0):
    """Synthetic scene directories in the pipeline's on-disk layout."""
    rng = np.random.default_rng(seed)
    for k in range(n_scenes):
        scene = root / f"scene_{k:03d}"
        (scene / "integrals").mkdir(parents=True)
        ambient = float(rng.uniform(5, 25))
        truth = rng.normal(ambient, 4.0, (size, size)).astype(np.float32)
        truth[rng.random((size, size)) < 0.02] = ambient + 60.0
        sigma = truth if identity else (0.6 * truth + 0.4 * (ambient + 3.0)).astype(np.float32)
        write_tgr(scene / "integrals" / "sigma_2d.tgr", sigma, ambient, 0.1)
        write_tgr(scene / "truth.tgr", truth, ambient, 0.1)
    return root


class TestTraining:
    def test_dataset_too_small_rejected(self, tmp_path):
        synth_dataset(tmp_path, 10)
        with pytest.raises(TrainingError):
            train(tmp_path, tmp_path / "ck.pt", TrainConfig(epochs=1))

    def test_split_is_disjoint(self, tmp_path):
        synth_dataset(tmp_path, 50)
        scenes = scan_dataset(tmp_path)
        train_scenes, val_scenes = split_scenes(scenes)
        assert not set(train_scenes) & set(val_scenes)
        assert len(val_scenes) == 10

    def test_identity_mapping_learned_fast(self, tmp_path):
        # sigma == truth: the residual model starts exact, so validation
        # RMSE must sit below 0.5 degC within the first epochs.
        synth_dataset(tmp_path, 130, size=24)
        history = train(
            tmp_path, tmp_path / "ck.pt",
            TrainConfig(epochs=5, batch_size=8, perceptual_weight=0.0),
        )
        assert min(history["val_rmse_c"][:5]) < 0.5

    def test_loss_trend_non_increasing_smoothed(self, tmp_path):
        synth_dataset(tmp_path, 130, size=24, identity=False)
        history = train(
            tmp_path, tmp_path / "ck.pt",
            TrainConfig(epochs=8, batch_size=8, perceptual_weight=0.1, base_channels=16),
        )
        losses = history["train_loss"]
        first = float(np.mean(losses[:3]))
        last = float(np.mean(losses[-3:]))
        assert last <= first + 1e-6
        assert (tmp_path / "ck.pt").exists()

    def test_pair_dimension_validation(self):
        with pytest.raises(ValueError):
            TrainingPair(np.zeros((4, 4), np.float32), np.zeros((5, 5), np.float32), 15.0)
