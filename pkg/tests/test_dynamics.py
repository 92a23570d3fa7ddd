"""Decay recurrence exactness and growth-exponent fitting."""

import math

import numpy as np
import pytest

from infobench import (
    InsufficientDataError,
    UsageError,
    classify_model_signature,
    fit_alpha,
    fit_alpha_points,
    simulate_decay,
)
from infobench.dynamics import AlphaFit, log_grid


class TestSimulateDecay:
    def test_zero_efficiency_is_constant(self):
        trace = simulate_decay(50.0, 0.2, np.zeros(100))
        np.testing.assert_array_equal(trace.n, np.full(101, 50.0))
        np.testing.assert_array_equal(trace.closed_form, np.full(101, 50.0))

    def test_constant_half_efficiency(self):
        trace = simulate_decay(100.0, 0.1, np.full(10, 0.5))
        assert trace.n[10] == pytest.approx(100.0 * 0.95**10, rel=1e-12)
        assert trace.n[10] == pytest.approx(59.874, abs=1e-3)

    def test_recurrence_matches_independent_loop(self):
        rng = np.random.default_rng(3)
        c = rng.random(500)
        trace = simulate_decay(17.0, 0.3, c)
        n = 17.0
        for t, ct in enumerate(c):
            n = n * (1.0 - 0.3 * ct)
            assert trace.n[t + 1] == n  # machine-exact

    def test_closed_form_ratio_at_ten_steps(self):
        trace = simulate_decay(1.0, 0.1, np.ones(10))
        ratio = trace.n[10] / trace.closed_form[10]
        oracle = (0.9 / math.exp(-0.1)) ** 10
        assert ratio == pytest.approx(oracle, rel=1e-12)
        assert 0.94 <= ratio <= 1.0

    def test_closed_form_upper_bounds_recurrence(self):
        rng = np.random.default_rng(4)
        trace = simulate_decay(5.0, 0.5, rng.random(1000))
        assert (trace.n <= trace.closed_form + 1e-12).all()

    def test_gap_bound_in_mild_regime(self):
        # eta * C <= 0.1 over 10^3 steps: gap stays within 5% of n(0).
        rng = np.random.default_rng(5)
        c = rng.random(1000)
        trace = simulate_decay(1.0, 0.1, c)  # eta*c <= 0.1
        assert trace.max_relative_gap() <= 0.05

    def test_eta_range_enforced(self):
        for eta in (0.0, 1.0, -0.2, 1.5):
            with pytest.raises(UsageError):
                simulate_decay(1.0, eta, np.ones(5))

    def test_c_range_enforced(self):
        with pytest.raises(UsageError):
            simulate_decay(1.0, 0.5, np.array([0.5, 1.2]))

    def test_alignment_invariant(self):
        trace = simulate_decay(3.0, 0.2, np.ones(7))
        assert len(trace.n) == len(trace.c) + 1
        assert len(trace.closed_form) == len(trace.n)


class TestFitAlpha:
    def test_linear_growth(self):
        t = np.arange(1, 2001)
        fit = fit_alpha(3.0 * t, seed=0)
        assert fit.alpha == pytest.approx(1.0, abs=1e-6)
        assert fit.r2 > 0.999999
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-6)

    def test_constant_series(self):
        fit = fit_alpha(np.full(2000, 7.0), seed=0)
        assert fit.alpha == pytest.approx(0.0, abs=1e-6)

    def test_square_root_growth(self):
        t = np.arange(1, 5001)
        fit = fit_alpha(2.0 * np.sqrt(t), seed=0)
        assert fit.alpha == pytest.approx(0.5, abs=1e-6)

    def test_window_restricts_fit(self):
        t = np.arange(1, 10_001).astype(float)
        series = np.where(t <= 100, t, 100.0 * (t / 100.0) ** 0.2)
        fit = fit_alpha(series, window=(200, 10_000), seed=0)
        assert fit.alpha == pytest.approx(0.2, abs=1e-6)

    def test_zero_counts_offset_flagged(self):
        series = np.concatenate([np.zeros(50), np.arange(1.0, 1951.0)])
        fit = fit_alpha(series, seed=0)
        assert fit.offset_applied

    def test_insufficient_positive_points(self):
        with pytest.raises(InsufficientDataError):
            fit_alpha(np.zeros(1000), seed=0)

    def test_bad_window(self):
        with pytest.raises(UsageError):
            fit_alpha(np.arange(1.0, 101.0), window=(0, 50), seed=0)
        with pytest.raises(UsageError):
            fit_alpha(np.arange(1.0, 101.0), window=(10, 500), seed=0)

    def test_endpoint_insensitivity_on_exact_power_law(self):
        t = np.arange(1, 100_001)
        series = 0.5 * t**0.7
        full = fit_alpha(series, window=(100, 100_000), seed=1)
        inner = fit_alpha(series, window=(1000, 10_000), seed=1)
        assert abs(full.alpha - inner.alpha) < 0.1

    def test_bootstrap_deterministic(self):
        rng = np.random.default_rng(7)
        series = np.cumsum(rng.random(3000) < 0.05).astype(float)
        a = fit_alpha(series, window=(10, 3000), seed=5)
        b = fit_alpha(series, window=(10, 3000), seed=5)
        assert a == b

    def test_ci_contains_alpha(self):
        rng = np.random.default_rng(8)
        series = np.cumsum(rng.random(5000) < 0.05).astype(float)
        fit = fit_alpha(series, window=(10, 5000), seed=2)
        assert fit.ci_low <= fit.alpha <= fit.ci_high

    def test_points_form(self):
        t = np.array([10, 20, 40, 80, 160, 320, 640, 1280, 2560, 5120])
        fit = fit_alpha_points(t, 2.0 * t.astype(float), seed=0)
        assert fit.alpha == pytest.approx(1.0, abs=1e-9)

    def test_log_domain_guard(self):
        with pytest.raises(UsageError):
            fit_alpha_points(np.array([0, 1] + list(range(2, 12))),
                             np.ones(12), seed=0)


class TestLogGrid:
    def test_unique_sorted_ints(self):
        g = log_grid(10, 10_000, 64)
        assert (np.diff(g) > 0).all()
        assert g[0] == 10 and g[-1] == 10_000

    def test_degenerate_range(self):
        np.testing.assert_array_equal(log_grid(5, 5, 16), [5])


class TestClassification:
    def _fit(self, lo, hi):
        mid = (lo + hi) / 2
        return AlphaFit(alpha=mid, intercept=0.0, r2=0.9, ci_low=lo, ci_high=hi,
                        window=(1, 100), n_points=50, offset_applied=False)

    def test_causal_like(self):
        assert classify_model_signature(self._fit(0.02, 0.11)) == "causal_like"

    def test_correlational_like(self):
        assert classify_model_signature(self._fit(0.88, 1.07)) == "correlational_like"

    def test_indeterminate(self):
        assert classify_model_signature(self._fit(0.4, 0.8)) == "indeterminate"

    def test_custom_bands(self):
        fit = self._fit(0.55, 0.6)
        assert classify_model_signature(fit, causal_band=0.65) == "causal_like"
