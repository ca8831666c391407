"""Residual attention prior: raw error maps, calibration, channel fusion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from resseg.errors import RangeViolation, ShapeMismatch
from resseg.residual import (
    assemble_seg_input,
    calibrate_residual,
    compute_residual,
    static_residual,
    zero_residual,
)

nonneg_images = arrays(
    np.float64, (12, 12), elements=st.floats(0.0, 5.0, allow_nan=False)
)


class TestComputeResidual:
    def test_identical_inputs_zero(self):
        a = np.random.default_rng(0).random((8, 8))
        assert np.all(compute_residual(a, a) == 0.0)

    def test_constant_offset(self):
        real = np.zeros((5, 5))
        synth = np.full((5, 5), -0.3)
        assert compute_residual(real, synth) == pytest.approx(np.full((5, 5), 0.3))

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((6, 6)), rng.random((6, 6))
        expected = np.array([[abs(b[i, j] - a[i, j]) for j in range(6)] for i in range(6)])
        assert compute_residual(a, b) == pytest.approx(expected)

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((7, 7)), rng.random((7, 7))
        assert compute_residual(a, b) == pytest.approx(compute_residual(b, a))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            compute_residual(np.zeros((2, 2)), np.zeros((3, 3)))


class TestStaticResidual:
    def test_all_identical_channels_zero(self):
        a = np.random.default_rng(3).random((6, 6))
        assert static_residual(a, a, a, a) == pytest.approx(0.0, abs=1e-12)

    def test_zero_conditioning(self):
        z = np.zeros((4, 4))
        real = np.full((4, 4), 0.7)
        assert static_residual(z, z, z, real) == pytest.approx(np.full((4, 4), 0.7))

    def test_matches_formula_oracle(self):
        rng = np.random.default_rng(4)
        f, t1, t2, real = (rng.random((5, 5)) for _ in range(4))
        expected = np.abs(real - (f + t1 + t2) / 3.0)
        assert static_residual(f, t1, t2, real) == pytest.approx(expected)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            static_residual(np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((3, 3)))


class TestCalibrateResidual:
    def test_output_range(self):
        rng = np.random.default_rng(5)
        res = calibrate_residual(rng.random((20, 20)))
        assert res.values.min() >= 0.0 and res.values.max() <= 1.0

    def test_constant_input_flagged_zero(self):
        res = calibrate_residual(np.full((6, 6), 0.4))
        assert res.constant
        assert np.all(res.values == 0.0)

    def test_negative_input_rejected(self):
        with pytest.raises(RangeViolation):
            calibrate_residual(np.full((3, 3), -0.1))

    def test_outlier_maps_to_one_and_bulk_order_preserved(self):
        rng = np.random.default_rng(6)
        raw = rng.uniform(0.1, 0.2, size=(30, 30))
        raw[0, 0] = 100.0
        res = calibrate_residual(raw)
        assert res.values[0, 0] == 1.0
        bulk = raw.copy().reshape(-1)[1:]
        cal = res.values.reshape(-1)[1:]
        lo, hi = np.percentile(raw, [1.0, 99.0])
        interior = (bulk > lo) & (bulk < hi)
        assert np.all(np.argsort(bulk[interior]) == np.argsort(cal[interior]))

    def test_idempotent_on_normalized_input(self):
        rng = np.random.default_rng(7)
        raw = rng.random((25, 25))
        raw.flat[0], raw.flat[1] = 0.0, 1.0  # anchor the min-max range
        once = calibrate_residual(raw, low_pct=0.0, high_pct=100.0)
        twice = calibrate_residual(once.values, low_pct=0.0, high_pct=100.0)
        assert np.max(np.abs(twice.values - once.values)) < 1e-6

    @given(raw=nonneg_images)
    @settings(max_examples=100, deadline=None)
    def test_values_always_in_unit_interval(self, raw):
        res = calibrate_residual(raw)
        assert np.all((res.values >= 0.0) & (res.values <= 1.0))

    def test_argmax_preserved_without_high_clipping(self):
        rng = np.random.default_rng(8)
        raw = rng.random((10, 10))
        res = calibrate_residual(raw, low_pct=1.0, high_pct=100.0)
        assert np.argmax(res.values) == np.argmax(raw)


class TestAssembleSegInput:
    def test_channel_order(self):
        shape = (9, 9)
        f, t1, t2 = (np.full(shape, v) for v in (0.1, 0.2, 0.3))
        res = calibrate_residual(np.random.default_rng(9).random(shape))
        out = assemble_seg_input(f, t1, t2, res, subject_id="s", slice_index=4)
        assert out.channels.shape == (4,) + shape
        assert out.channels[0] == pytest.approx(f)
        assert out.channels[1] == pytest.approx(t1)
        assert out.channels[2] == pytest.approx(t2)
        assert out.channels[3] == pytest.approx(res.values)
        assert out.subject_id == "s" and out.slice_index == 4
        assert out.residual_source == "dynamic"

    def test_zero_residual_provenance(self):
        z = zero_residual((5, 5))
        assert z.constant and z.source == "zero"
        out = assemble_seg_input(*(np.zeros((5, 5)),) * 3, z)
        assert np.all(out.channels[3] == 0.0)
        assert out.residual_source == "zero"

    def test_shape_mismatch(self):
        res = zero_residual((4, 4))
        with pytest.raises(ShapeMismatch):
            assemble_seg_input(np.zeros((4, 4)), np.zeros((4, 4)), np.zeros((5, 5)), res)
