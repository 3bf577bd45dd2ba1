"""Ambient estimation, analytic unmixing, and the external backend protocol."""

import json
import stat
import sys

import numpy as np
import pytest

from thermosa.correction import (
    CorrectionInput,
    correct_analytic,
    correct_external,
    estimate_ambient,
)
from thermosa.errors import BackendError, CapabilityError, EmptySelectionError
from thermosa.raster import TemperatureRaster, read_raster, write_raster


def raster(values, ambient=13.0, res=0.1):
    return TemperatureRaster(np.asarray(values, dtype=np.float32), ambient, res)


class TestEstimateAmbient:
    def test_single_constant_image(self):
        assert estimate_ambient([raster(np.full((4, 4), 13.0))]) == pytest.approx(13.0)

    def test_two_images_weighted(self):
        imgs = [raster(np.full((4, 4), 10.0)), raster(np.full((4, 4), 16.0))]
        assert estimate_ambient(imgs) == pytest.approx(13.0)

    def test_many_frames_near_truth(self):
        rng = np.random.default_rng(0)
        imgs = [raster(rng.normal(13.0, 1.5, (32, 32))) for _ in range(121)]
        assert estimate_ambient(imgs) == pytest.approx(13.0, abs=0.1)

    def test_nan_excluded(self):
        data = np.array([[np.nan, 20.0], [10.0, np.nan]])
        assert estimate_ambient([raster(data)]) == pytest.approx(15.0)

    def test_empty_selection(self):
        with pytest.raises(EmptySelectionError):
            estimate_ambient([raster(np.full((2, 2), np.nan))])


class TestAnalytic:
    def test_hand_inversion(self):
        inp = CorrectionInput(
            sigma=raster([[45.0]]), ambient_c=13.0,
            mask=raster([[0.6]]), veg_ref_c=15.0,
        )
        out = correct_analytic(inp)
        assert out.raster.data[0, 0] == pytest.approx(65.0, abs=1e-4)

    def test_identity_where_fully_visible(self):
        rng = np.random.default_rng(1)
        sigma = raster(rng.uniform(0, 100, (16, 16)))
        inp = CorrectionInput(sigma, 13.0, mask=raster(np.ones((16, 16))), veg_ref_c=18.0)
        out = correct_analytic(inp)
        assert np.allclose(out.raster.data, sigma.data, atol=1e-5)
        assert not out.low_confidence.any() and not out.clamped.any()

    def test_exact_recovery_of_constructed_mixture(self):
        rng = np.random.default_rng(2)
        t_s = rng.uniform(5.0, 290.0, (32, 32))
        f = rng.uniform(0.15, 1.0, (32, 32))
        t_v = 17.5
        sigma = f * t_s + (1 - f) * t_v
        inp = CorrectionInput(raster(sigma), 13.0, mask=raster(f), veg_ref_c=t_v)
        out = correct_analytic(inp)
        assert np.max(np.abs(out.raster.data - t_s.astype(np.float32))) <= 1e-3

    def test_low_visibility_passthrough_flagged(self):
        inp = CorrectionInput(
            raster([[40.0, 40.0]]), 13.0, mask=raster([[0.05, 0.5]]), veg_ref_c=15.0
        )
        out = correct_analytic(inp, f_min=0.1)
        assert out.raster.data[0, 0] == pytest.approx(40.0)  # untouched
        assert out.low_confidence[0, 0] and not out.low_confidence[0, 1]

    def test_clamped_to_physical_range(self):
        inp = CorrectionInput(
            raster([[350.0]]), 13.0, mask=raster([[0.5]]), veg_ref_c=15.0
        )
        out = correct_analytic(inp)
        assert out.raster.data[0, 0] == 400.0
        assert out.clamped[0, 0]

    def test_default_vegetation_reference(self):
        inp = CorrectionInput(raster([[30.0]]), 13.0, mask=raster([[0.5]]), sun_absorption_c=7.0)
        assert inp.vegetation_reference_c == pytest.approx(16.5)

    def test_missing_mask_rejected(self):
        with pytest.raises(CapabilityError):
            correct_analytic(CorrectionInput(raster([[1.0]]), 13.0))

    def test_nodata_propagates(self):
        inp = CorrectionInput(
            raster([[np.nan, 20.0]]), 13.0, mask=raster([[0.5, 0.5]]), veg_ref_c=15.0
        )
        out = correct_analytic(inp)
        assert np.isnan(out.raster.data[0, 0]) and np.isfinite(out.raster.data[0, 1])


def write_backend(tmp_path, name, body):
    script = tmp_path / name
    script.write_text("#!/usr/bin/env python3\n" + body)
    script.chmod(script.stat().st_mode | stat.S_IEXEC)
    return [sys.executable, str(script)]


ECHO_BODY = """
import json, shutil, sys
from pathlib import Path
req_path = Path(sys.argv[sys.argv.index("--request") + 1])
req = json.loads(req_path.read_text())
shutil.copy(req_path.parent / req["input"], req_path.parent / req["output"])
"""

MANGLE_BODY = """
import json, struct, sys
from pathlib import Path
import numpy as np
req_path = Path(sys.argv[sys.argv.index("--request") + 1])
req = json.loads(req_path.read_text())
data = np.zeros((2, 3), dtype="<f4")
header = struct.pack("<4sIIff", b"TGR1", 3, 2, 0.0, 0.1)
(req_path.parent / req["output"]).write_bytes(header + data.tobytes())
"""


class TestExternalProtocol:
    def test_echo_roundtrip_preserves_bytes(self, tmp_path):
        cmd = write_backend(tmp_path, "echo.py", ECHO_BODY)
        rng = np.random.default_rng(3)
        sigma = raster(rng.normal(20, 30, (24, 24)), ambient=13.0)
        exchange = tmp_path / "xchg"
        inp = CorrectionInput(sigma, 13.0, mask=raster(np.ones((24, 24))))
        out = correct_external(inp, cmd, exchange_dir=exchange)
        assert out.data.tobytes() == sigma.data.tobytes()
        # The written request follows the documented schema.
        req = json.loads((exchange / "request.json").read_text())
        assert req["version"] == 1 and req["input"] == "sigma.tgr"
        assert req["mask"] == "f.tgr" and req["output"] == "sigma_prime.tgr"
        assert read_raster(exchange / "sigma.tgr").ambient_c == pytest.approx(13.0)

    def test_dimension_mismatch_rejected(self, tmp_path):
        cmd = write_backend(tmp_path, "mangle.py", MANGLE_BODY)
        inp = CorrectionInput(raster(np.zeros((8, 8))), 13.0)
        with pytest.raises(BackendError):
            correct_external(inp, cmd, exchange_dir=tmp_path / "x")

    def test_missing_output_rejected(self, tmp_path):
        cmd = write_backend(tmp_path, "noop.py", "pass\n")
        inp = CorrectionInput(raster(np.zeros((4, 4))), 13.0)
        with pytest.raises(BackendError):
            correct_external(inp, cmd, exchange_dir=tmp_path / "x")

    def test_nonzero_exit_rejected(self, tmp_path):
        cmd = write_backend(tmp_path, "fail.py", "import sys; sys.exit(3)\n")
        inp = CorrectionInput(raster(np.zeros((4, 4))), 13.0)
        with pytest.raises(BackendError) as err:
            correct_external(inp, cmd, exchange_dir=tmp_path / "x")
        assert "exited 3" in str(err.value)

    def test_timeout(self, tmp_path):
        cmd = write_backend(tmp_path, "slow.py", "import time; time.sleep(5)\n")
        inp = CorrectionInput(raster(np.zeros((4, 4))), 13.0)
        with pytest.raises(BackendError) as err:
            correct_external(inp, cmd, exchange_dir=tmp_path / "x", timeout_s=0.5)
        assert "timed out" in str(err.value)

    def test_exchange_dir_from_environment(self, tmp_path, monkeypatch):
        from thermosa.correction import EXCHANGE_DIR_ENV

        root = tmp_path / "env_exchange"
        monkeypatch.setenv(EXCHANGE_DIR_ENV, str(root))
        cmd = write_backend(tmp_path, "echo.py", ECHO_BODY)
        correct_external(CorrectionInput(raster(np.zeros((4, 4))), 13.0), cmd)
        assert (root / "request.json").exists()
        assert (root / "sigma_prime.tgr").exists()
