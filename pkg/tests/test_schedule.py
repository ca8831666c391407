"""Noise schedule tables and the analytic forward/reverse operations."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resseg.errors import (
    DegenerateTimestep,
    InvalidSchedule,
    InvalidTimestep,
)
from resseg.schedule import (
    build_schedule,
    forward_marginal,
    forward_step,
    predict_x0,
    reverse_step,
    strided_timesteps,
)


class TestBuildSchedule:
    def test_single_step_product(self):
        sched = build_schedule(1, "linear", 0.5, 0.5)
        assert sched.alpha_bars == pytest.approx([0.5])

    def test_two_step_product(self):
        sched = build_schedule(2, "linear", 0.1, 0.2)
        assert sched.alpha_bars == pytest.approx([0.9, 0.72])

    def test_default_linear_terminal_alpha_bar(self):
        sched = build_schedule(1000, "linear", 1e-4, 0.02)
        assert sched.alpha_bar(1000) < 1e-4

    def test_alpha_bar_zero_is_one(self):
        sched = build_schedule(10, "linear", 1e-4, 0.02)
        assert sched.alpha_bar(0) == 1.0

    def test_cosine_kind_valid(self):
        sched = build_schedule(100, "cosine")
        assert np.all(np.diff(sched.alpha_bars) < 0)
        assert np.all((sched.betas > 0) & (sched.betas < 1))

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"T": 0},
            {"T": 10, "beta_min": 0.0},
            {"T": 10, "beta_min": 0.3, "beta_max": 0.2},
            {"T": 10, "beta_max": 1.0},
            {"T": 10, "kind": "geometric"},
        ],
    )
    def test_invalid_parameters_rejected(self, kwargs):
        with pytest.raises(InvalidSchedule):
            build_schedule(
                kwargs.pop("T"),
                kwargs.pop("kind", "linear"),
                kwargs.pop("beta_min", 1e-4),
                kwargs.pop("beta_max", 0.02),
            )

    @given(
        T=st.integers(1, 500),
        beta_min=st.floats(1e-6, 0.01),
        spread=st.floats(0.0, 0.05),
    )
    @settings(max_examples=50, deadline=None)
    def test_running_product_identity(self, T, beta_min, spread):
        sched = build_schedule(T, "linear", beta_min, beta_min + spread)
        direct = np.cumprod(1.0 - sched.betas)
        assert np.allclose(sched.alpha_bars, direct, rtol=1e-12, atol=0)
        assert np.all(np.diff(sched.alpha_bars) < 0) or T == 1


class TestForwardProcess:
    def setup_method(self):
        self.sched = build_schedule(100, "linear", 1e-4, 0.02)

    def test_forward_step_formula(self):
        x = np.zeros((4, 4))
        sched = build_schedule(1, "linear", 0.25, 0.25)
        out = forward_step(x, 1, sched, np.ones((4, 4)))
        assert out == pytest.approx(np.full((4, 4), 0.5))

    def test_forward_step_small_beta_near_identity(self):
        x = np.full((3, 3), 0.7)
        out = forward_step(x, 1, self.sched, np.zeros((3, 3)))
        assert out == pytest.approx(x, abs=1e-4)

    def test_forward_marginal_matches_formula(self):
        rng = np.random.default_rng(0)
        x0 = rng.normal(size=(8, 8))
        eps = rng.normal(size=(8, 8))
        t = 37
        ab = self.sched.alpha_bar(t)
        expected = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps
        assert forward_marginal(x0, t, self.sched, eps) == pytest.approx(expected)

    def test_out_of_range_timestep(self):
        x = np.zeros((2, 2))
        for t in (0, 101):
            with pytest.raises(InvalidTimestep):
                forward_step(x, t, self.sched, x)
        # forward_marginal accepts t=0 (alpha_bar(0)=1, identity) but not t>T
        assert forward_marginal(x + 1.0, 0, self.sched, x) == pytest.approx(x + 1.0)
        with pytest.raises(InvalidTimestep):
            forward_marginal(x, 101, self.sched, x)


class TestPredictX0:
    def setup_method(self):
        self.sched = build_schedule(200, "linear", 1e-4, 0.02)

    @given(seed=st.integers(0, 10_000), t=st.integers(1, 200))
    @settings(max_examples=100, deadline=None)
    def test_inverts_forward_marginal(self, seed, t):
        rng = np.random.default_rng(seed)
        x0 = rng.uniform(-1, 1, size=(6, 6))
        eps = rng.normal(size=(6, 6))
        x_t = forward_marginal(x0, t, self.sched, eps)
        rec = predict_x0(x_t, t, eps, self.sched, clamp=False)
        assert np.max(np.abs(rec - x0)) < 1e-6

    def test_clamped_by_default(self):
        x_t = np.full((2, 2), 50.0)
        out = predict_x0(x_t, 100, np.zeros((2, 2)), self.sched)
        assert np.all(out <= 1.0)

    def test_degenerate_alpha_bar_rejected(self):
        # push alpha_bar numerically to zero with a long aggressive schedule
        sched = build_schedule(5000, "linear", 0.5, 0.99)
        assert sched.alpha_bar(5000) == 0.0
        with pytest.raises(DegenerateTimestep):
            predict_x0(np.zeros((2, 2)), 5000, np.zeros((2, 2)), sched)


class TestReverseStep:
    def setup_method(self):
        self.sched = build_schedule(50, "linear", 1e-4, 0.02)

    def test_t1_drops_noise_term(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(4, 4))
        eps_hat = rng.normal(size=(4, 4))
        noise = rng.normal(size=(4, 4))
        assert reverse_step(x, 1, eps_hat, self.sched, noise) == pytest.approx(
            reverse_step(x, 1, eps_hat, self.sched, None)
        )

    def test_small_beta_is_near_identity(self):
        sched = build_schedule(1, "linear", 1e-9, 1e-9)
        x = np.full((3, 3), 0.4)
        out = reverse_step(x, 1, np.zeros((3, 3)), sched, None)
        assert out == pytest.approx(x, abs=1e-6)

    def test_oracle_chain_contracts_to_x0(self):
        # with the true noise supplied at every step, the noiseless reverse
        # chain from x_T lands near x0 on a scalar case
        sched = build_schedule(200, "linear", 1e-4, 0.02)
        rng = np.random.default_rng(2)
        x0 = np.array([[0.37]])
        eps = rng.normal(size=(1, 1))
        x = forward_marginal(x0, sched.T, sched, eps)
        for t in range(sched.T, 0, -1):
            ab = sched.alpha_bar(t)
            eps_t = (x - np.sqrt(ab) * x0) / np.sqrt(1 - ab)
            x = reverse_step(x, t, eps_t, sched, None)
        assert abs(float(x[0, 0]) - 0.37) < 0.1


class TestStridedTimesteps:
    def test_full_chain(self):
        assert strided_timesteps(5, 5) == [5, 4, 3, 2, 1]

    def test_endpoints_present_and_decreasing(self):
        ts = strided_timesteps(1000, 50)
        assert ts[0] == 1000 and ts[-1] == 1
        assert all(a > b for a, b in zip(ts, ts[1:]))

    def test_single_step(self):
        assert strided_timesteps(100, 1)[0] == 100
