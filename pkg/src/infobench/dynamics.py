"""Exception-decay simulation and growth-exponent estimation.

The decay recurrence n(t+1) = n(t) * (1 - eta * C(t)) is iterated exactly
and compared against its first-order closed form n(0) * exp(-eta * sum C).
The growth exponent alpha of a cumulative exception trajectory is fitted
by ordinary least squares on (log t, log n) over a deterministic
log-spaced grid, with a block bootstrap for the confidence interval:
alpha near 1 is the signature of instance-storing pattern matchers,
alpha near 0 of models that encode the generating mechanism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InsufficientDataError, UsageError
from .info_core import derive_rng

DEFAULT_BLOCK_LENGTH = 16
DEFAULT_BOOTSTRAP_REPS = 1000
#: Maximum number of grid points used by the log-log fit.
DEFAULT_MAX_GRID = 512

#: Classification bands: causal-like below, correlational-like above.
CAUSAL_BAND = 0.5
CORRELATIONAL_BAND = 0.7


@dataclass(frozen=True)
class DecayTrace:
    """Exact recurrence trajectory plus its closed-form companion.

    ``n`` has one more entry than ``c`` (the initial mass), and
    ``closed_form`` aligns with ``n``.
    """

    n: np.ndarray
    c: np.ndarray
    eta: float
    closed_form: np.ndarray

    def max_relative_gap(self) -> float:
        """max_t |closed - recurrence| / n(0); 0 when n(0) = 0."""
        n0 = float(self.n[0])
        if n0 <= 0.0:
            return 0.0
        return float(np.max(np.abs(self.closed_form - self.n)) / n0)


def simulate_decay(
    n0: float, eta: float, c_series: Sequence[float] | np.ndarray
) -> DecayTrace:
    """Iterate n(t+1) = n(t)(1 - eta c_t) exactly and attach the closed form.

    ``eta`` must lie strictly inside (0, 1) and every c_t in [0, 1]. The
    closed form n0 * exp(-eta * sum_{i<t} c_i) upper-bounds the recurrence
    pointwise (1 - x <= exp(-x)).
    """
    if not 0.0 < eta < 1.0:
        raise UsageError(f"eta must lie strictly in (0, 1), got {eta}")
    if n0 < 0.0:
        raise UsageError("n0 must be >= 0")
    c = np.asarray(c_series, dtype=float)
    if c.ndim != 1:
        raise UsageError("c_series must be 1-D")
    if c.size and (c.min() < 0.0 or c.max() > 1.0):
        raise UsageError("every c value must lie in [0, 1]")

    # cumprod over [n0, factors...] reproduces the recurrence's exact
    # left-to-right float association, so n(t+1) == n(t)*(1 - eta c_t)
    # bit-for-bit.
    n = np.cumprod(np.concatenate([[float(n0)], 1.0 - eta * c]))
    closed = np.empty(c.size + 1)
    closed[0] = n0
    if c.size:
        closed[1:] = n0 * np.exp(-eta * np.cumsum(c))
    return DecayTrace(n=n, c=c, eta=float(eta), closed_form=closed)


@dataclass(frozen=True)
class AlphaFit:
    """Log-log growth-exponent fit with a block-bootstrap interval."""

    alpha: float
    intercept: float
    r2: float
    ci_low: float
    ci_high: float
    window: tuple[int, int]
    n_points: int
    offset_applied: bool

    def __post_init__(self) -> None:
        if self.window[0] < 1:
            raise UsageError("fit window must start at t >= 1 (log domain)")
        object.__setattr__(self, "ci_low", min(self.ci_low, self.alpha))
        object.__setattr__(self, "ci_high", max(self.ci_high, self.alpha))


def log_grid(t_min: int, t_max: int, max_points: int = DEFAULT_MAX_GRID) -> np.ndarray:
    """Deterministic log-spaced integer grid in [t_min, t_max], deduplicated.

    Evaluating the fit on this grid weights every decade equally, which is
    the standard guard against endpoint domination in log-log regression.
    """
    if t_min < 1 or t_max < t_min:
        raise UsageError("need 1 <= t_min <= t_max")
    raw = np.logspace(math.log10(t_min), math.log10(t_max), max_points)
    return np.unique(np.round(raw).astype(np.int64))


def _ols_loglog(logt: np.ndarray, logn: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(logt, logn, 1)
    pred = slope * logt + intercept
    ss_res = float(((logn - pred) ** 2).sum())
    ss_tot = float(((logn - logn.mean()) ** 2).sum())
    if ss_tot < 1e-30:
        r2 = 1.0 if ss_res < 1e-30 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def fit_alpha_points(
    t_values: Sequence[int] | np.ndarray,
    n_values: Sequence[float] | np.ndarray,
    bootstrap_reps: int = DEFAULT_BOOTSTRAP_REPS,
    seed: int = 0,
    block_length: int = DEFAULT_BLOCK_LENGTH,
) -> AlphaFit:
    """Fit n ~ t^alpha on explicit (t, n) points.

    Zero counts are handled by fitting log(n + 1) instead (flagged in the
    result). The bootstrap resamples blocks of ``block_length`` consecutive
    points to respect the serial correlation of online traces.
    """
    t = np.asarray(t_values, dtype=float)
    n = np.asarray(n_values, dtype=float)
    if t.shape != n.shape or t.ndim != 1:
        raise UsageError("t_values and n_values must be aligned 1-D arrays")
    if t.size and t.min() < 1:
        raise UsageError("t values must be >= 1 (log domain)")
    if np.any(n < 0):
        raise UsageError("n values must be >= 0")
    positive = int((n > 0).sum())
    if positive < 10:
        raise InsufficientDataError(
            f"need >= 10 points with n > 0, have {positive}"
        )
    offset_applied = bool(np.any(n == 0.0))
    y = np.log(n + 1.0) if offset_applied else np.log(n)
    x = np.log(t)

    alpha, intercept, r2 = _ols_loglog(x, y)

    n_pts = t.size
    n_blocks = max(1, math.ceil(n_pts / block_length))
    starts_max = max(n_pts - block_length, 0)
    rng = derive_rng(seed)
    reps = np.empty(bootstrap_reps)
    for r in range(bootstrap_reps):
        idx_parts = []
        starts = rng.integers(0, starts_max + 1, size=n_blocks)
        for s in starts:
            idx_parts.append(np.arange(s, min(s + block_length, n_pts)))
        idx = np.concatenate(idx_parts)[:n_pts]
        if np.ptp(x[idx]) < 1e-12:
            reps[r] = alpha
            continue
        reps[r], _, _ = _ols_loglog(x[idx], y[idx])
    lo, hi = np.percentile(reps, [2.5, 97.5])
    return AlphaFit(
        alpha=alpha,
        intercept=intercept,
        r2=r2,
        ci_low=float(lo),
        ci_high=float(hi),
        window=(int(t.min()), int(t.max())),
        n_points=n_pts,
        offset_applied=offset_applied,
    )


def fit_alpha(
    n_observed: Sequence[float] | np.ndarray,
    window: tuple[int, int] | None = None,
    bootstrap_reps: int = DEFAULT_BOOTSTRAP_REPS,
    seed: int = 0,
    block_length: int = DEFAULT_BLOCK_LENGTH,
    max_grid: int = DEFAULT_MAX_GRID,
) -> AlphaFit:
    """Fit the growth exponent of a per-step cumulative series n(t), t = 1..len.

    ``window`` restricts the fit to t in [t_min, t_max]; points are taken on
    a deterministic log-spaced grid of at most ``max_grid`` steps.
    """
    series = np.asarray(n_observed, dtype=float)
    if series.ndim != 1 or series.size == 0:
        raise UsageError("n_observed must be a nonempty 1-D series")
    t_lo, t_hi = window if window is not None else (1, series.size)
    if not 1 <= t_lo <= t_hi <= series.size:
        raise UsageError(f"window {window} outside series range 1..{series.size}")
    grid = log_grid(int(t_lo), int(t_hi), max_grid)
    return fit_alpha_points(
        grid,
        series[grid - 1],
        bootstrap_reps=bootstrap_reps,
        seed=seed,
        block_length=block_length,
    )


def classify_model_signature(
    fit: AlphaFit,
    causal_band: float = CAUSAL_BAND,
    correlational_band: float = CORRELATIONAL_BAND,
) -> str:
    """Map an alpha fit to {causal_like, correlational_like, indeterminate}.

    causal_like when the whole interval sits below ``causal_band``;
    correlational_like when it sits above ``correlational_band``.
    """
    if fit.ci_high < causal_band:
        return "causal_like"
    if fit.ci_low > correlational_band:
        return "correlational_like"
    return "indeterminate"
