"""Surface-field generation and the two-branch temperature augmentation.

The sigmoid-weight branch is cross-checked against an independent scalar
evaluation built on math.exp only; the package path goes through scipy.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermosa.errors import ParameterError
from thermosa.surface import (
    AugmentationParams,
    HotspotSpec,
    augment_fire,
    augment_nonfire,
    augment_raster,
    gen_surface_field,
    sigmoid_weight,
)


def scalar_oracle_nonfire(t, t_lower, t_upper, alpha, delta_t):
    """Independent evaluation of the smooth-shift branch via math.exp."""

    def psi(x):
        if x >= 0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    w = psi(alpha * (t - t_lower)) - psi(alpha * (t - t_upper))
    return t + w * delta_t


PARAMS_DT10 = AugmentationParams(
    t_lower_c=0.0, t_upper_c=24.0, alpha=0.5, delta_t_c=10.0,
    t_max_c=98.0, t_max_target_c=300.0,
)


class TestNonfire:
    def test_spec_point_t12(self):
        assert augment_nonfire(12.0, PARAMS_DT10) == pytest.approx(21.950547, abs=1e-4)

    def test_spec_point_t0(self):
        assert augment_nonfire(0.0, PARAMS_DT10) == pytest.approx(4.99994, abs=1e-4)

    def test_far_below_lower_bound_unchanged(self):
        out = augment_nonfire(-50.0, PARAMS_DT10)
        assert abs(out - (-50.0)) < 2e-6 * 10.0
        assert sigmoid_weight(-50.0, PARAMS_DT10) < 2e-6

    def test_matches_scalar_oracle_on_grid(self):
        grid = np.linspace(-60.0, 140.0, 1000)
        got = augment_nonfire(grid, PARAMS_DT10)
        want = [scalar_oracle_nonfire(t, 0.0, 24.0, 0.5, 10.0) for t in grid]
        assert np.max(np.abs(got - np.array(want))) < 1e-6

    @settings(max_examples=50, deadline=None)
    @given(t=st.floats(-200, 400, allow_nan=False))
    def test_weight_bounds_and_symmetry(self, t):
        w = sigmoid_weight(t, PARAMS_DT10)
        assert 0.0 < w < 1.0
        mirrored = sigmoid_weight(PARAMS_DT10.t_lower_c + PARAMS_DT10.t_upper_c - t, PARAMS_DT10)
        assert abs(w - mirrored) < 1e-6

    @settings(max_examples=30, deadline=None)
    @given(t=st.floats(-100, 200, allow_nan=False), h=st.floats(1e-6, 0.01))
    def test_continuity_bound(self, t, h):
        p = PARAMS_DT10
        lip = 1.0 + abs(p.delta_t_c) * p.alpha / 4.0
        assert abs(augment_nonfire(t + h, p) - augment_nonfire(t, p)) <= lip * h + 1e-6

    def test_monotone_in_delta_t(self):
        outs = [
            augment_nonfire(12.0, AugmentationParams(0.0, 24.0, 0.5, dt, 98.0, 300.0))
            for dt in (-10.0, 0.0, 5.0, 20.0)
        ]
        assert all(a < b for a, b in zip(outs, outs[1:]))


class TestFire:
    def test_paper_endpoint(self):
        assert augment_fire(98.0, PARAMS_DT10) == pytest.approx(300.0, abs=1e-3)

    def test_fixed_point_at_upper_bound(self):
        eps = 1e-6
        out = augment_fire(24.0 + eps, PARAMS_DT10)
        assert out == pytest.approx(24.0 + PARAMS_DT10.fire_scale * eps, abs=1e-9)

    def test_midrange_value(self):
        assert augment_fire(50.0, PARAMS_DT10) == pytest.approx(120.972973, abs=1e-4)

    def test_domain_error_below_upper(self):
        with pytest.raises(ParameterError):
            augment_fire(24.0, PARAMS_DT10)

    def test_endpoints_exact(self):
        p = PARAMS_DT10
        assert abs(augment_fire(p.t_max_c, p) - p.t_max_target_c) <= 1e-4
        eps = 1e-9
        assert abs(augment_fire(p.t_upper_c + eps, p) - p.t_upper_c) <= 1e-4


class TestRasterAugmentation:
    def test_constant_field_shift(self):
        r = gen_surface_field(1, 9.0, 8).with_data(np.full((8, 8), 9.0, dtype=np.float32))
        p = AugmentationParams.for_ambient(15.0)
        out = augment_raster(r, p)
        assert np.allclose(out.data, 14.9308, atol=1e-3)
        assert out.ambient_c == pytest.approx(15.0)

    def test_identity_parameters(self):
        rng = np.random.default_rng(3)
        data = rng.uniform(-5, 90, size=(16, 16)).astype(np.float32)
        from thermosa.raster import TemperatureRaster

        r = TemperatureRaster(data, 9.0, 0.1)
        p = AugmentationParams(0.0, 24.0, 0.5, 0.0, 98.0, 98.0)
        out = augment_raster(r, p)
        assert np.array_equal(out.data, data)

    def test_fire_pixel_invariant_across_ambients(self):
        # A 53 degC fire point survives ambient re-targeting untouched when
        # the fire range itself is not rescaled.
        from thermosa.raster import TemperatureRaster

        data = np.full((4, 4), 9.0, dtype=np.float32)
        data[1, 2] = 53.0
        r = TemperatureRaster(data, 9.0, 0.1)
        for target in range(0, 31, 3):
            p = AugmentationParams.for_ambient(float(target), t_max_c=98.0, t_max_target_c=98.0)
            out = augment_raster(r, p)
            assert out.data[1, 2] == pytest.approx(53.0, abs=5e-4)

    def test_nodata_passthrough(self):
        from thermosa.raster import TemperatureRaster

        r = TemperatureRaster(np.array([[np.nan, 10.0]], dtype=np.float32), 9.0, 0.1)
        out = augment_raster(r, AugmentationParams.for_ambient(20.0))
        assert math.isnan(out.data[0, 0]) and not math.isnan(out.data[0, 1])


class TestGeneration:
    def test_deterministic(self):
        a = gen_surface_field(123, 9.0, 64, [HotspotSpec((1.0, 1.0), 1.0, 80.0)])
        b = gen_surface_field(123, 9.0, 64, [HotspotSpec((1.0, 1.0), 1.0, 80.0)])
        assert a.data.tobytes() == b.data.tobytes()

    def test_background_bounds_ambient9(self):
        r = gen_surface_field(7, 9.0, 128)
        assert r.data.max() <= 24.0 + 1e-5
        assert r.data.min() >= 0.0

    def test_hotspot_peak_reached(self):
        r = gen_surface_field(7, 9.0, 256, [HotspotSpec((0.0, 0.0), 1.5, 98.0)])
        assert abs(float(r.data.max()) - 98.0) <= 0.5

    def test_offgrid_hotspot_peak(self):
        r = gen_surface_field(11, 9.0, 256, [HotspotSpec((2.137, -4.101), 0.8, 61.0)])
        assert abs(float(r.data.max()) - 61.0) <= 0.5

    def test_hotspot_outside_extent_rejected(self):
        with pytest.raises(ParameterError):
            gen_surface_field(7, 9.0, 64, [HotspotSpec((100.0, 0.0), 1.0, 80.0)])

    def test_low_peak_rejected(self):
        with pytest.raises(ParameterError):
            gen_surface_field(7, 9.0, 64, [HotspotSpec((0.0, 0.0), 1.0, 20.0)])

    def test_pixels_outside_influence_stay_background(self):
        size, res = 128, 0.2
        spot = HotspotSpec((-8.0, -8.0), 0.6, 90.0)
        r = gen_surface_field(5, 9.0, size, [spot], ground_res_m=res)
        plain = gen_surface_field(5, 9.0, size, [], ground_res_m=res)
        rr, cc = np.mgrid[0:size, 0:size]
        x, y = plain.pixel_to_ground(rr, cc)
        far = np.hypot(x - spot.center[0], y - spot.center[1]) > 4.0 * spot.radius_m
        assert np.array_equal(r.data[far], plain.data[far])

    def test_ambient_metadata(self):
        r = gen_surface_field(7, 21.0, 32)
        assert r.ambient_c == 21.0
        assert r.data.max() <= 36.0 + 1e-5
