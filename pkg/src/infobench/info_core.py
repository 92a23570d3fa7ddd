"""Exact and empirical information-theoretic primitives over finite alphabets.

All logarithms are base 2 and all information quantities are reported in
bits. The convention 0*log(0) = 0 is applied everywhere. Exact computation
on probability tables is the default path; the sampling estimators exist
for stream-based protocols and carry bootstrap uncertainty.

Everything here is a pure function over immutable values and is safe to
call from concurrent workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DistributionError, ModelCoverageError, UsageError

#: Probabilities below this are treated as exactly zero when they appear
#: inside a logarithm denominator guard.
PROB_EPS = 1e-12

#: Tolerance for "sums to one" checks on stored tables.
SUM_TOL = 1e-12

LN2 = math.log(2.0)


def derive_rng(*entropy: int) -> np.random.Generator:
    """Deterministic generator from a tuple of nonnegative integers.

    Used throughout the package so that every (seed, index, ...) pair maps
    to an independent, reproducible stream.
    """
    key = [int(e) for e in entropy]
    if any(e < 0 for e in key):
        raise UsageError(f"seed components must be nonnegative, got {key}")
    return np.random.default_rng(np.random.SeedSequence(key))


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


def _validate_prob_vector(p: np.ndarray, name: str, tol: float) -> np.ndarray:
    if p.ndim != 1 or p.size == 0:
        raise DistributionError(f"{name} must be a nonempty 1-D vector")
    if not np.all(np.isfinite(p)):
        raise DistributionError(f"{name} contains non-finite entries")
    if np.any(p < -tol):
        raise DistributionError(f"{name} contains negative entries")
    s = float(p.sum())
    if abs(s - 1.0) > tol:
        raise DistributionError(f"{name} sums to {s!r}, expected 1 within {tol}")
    return np.clip(p, 0.0, None)


def entropy(p: Sequence[float] | np.ndarray) -> float:
    """Shannon entropy of a probability vector, in bits.

    Raises DistributionError for negative entries or bad normalization
    (tolerance 1e-9 on the sum). Result lies in [0, log2(len(p))].
    """
    q = _validate_prob_vector(np.asarray(p, dtype=float), "p", tol=1e-9)
    nz = q[q > 0.0]
    return float(-(nz * np.log2(nz)).sum()) if nz.size else 0.0


@dataclass(frozen=True)
class JointTable:
    """Exact finite joint distribution p(x, y) over alphabets X x Y.

    ``px_y[x, y]`` holds the joint mass; rows index X, columns index Y.
    Entries must be nonnegative and sum to one within 1e-12. Marginals are
    derived on demand and are consistent with the table by construction.
    """

    px_y: np.ndarray
    row_labels: tuple[str, ...] | None = None
    col_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        a = np.asarray(self.px_y, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise DistributionError("joint table must be a nonempty 2-D matrix")
        if not np.all(np.isfinite(a)):
            raise DistributionError("joint table contains non-finite entries")
        if np.any(a < -SUM_TOL):
            raise DistributionError("joint table contains negative entries")
        a = np.clip(a, 0.0, None)
        s = float(a.sum())
        if abs(s - 1.0) > SUM_TOL:
            raise DistributionError(
                f"joint table sums to {s!r}, expected 1 within {SUM_TOL}"
            )
        object.__setattr__(self, "px_y", _readonly(a))

    @classmethod
    def from_array(cls, arr, normalize: bool = False) -> "JointTable":
        a = np.asarray(arr, dtype=float)
        if normalize:
            s = a.sum()
            if not np.isfinite(s) or s <= 0:
                raise DistributionError("cannot normalize: total mass not positive")
            a = a / s
        return cls(a)

    @property
    def alphabet_x(self) -> int:
        return int(self.px_y.shape[0])

    @property
    def alphabet_y(self) -> int:
        return int(self.px_y.shape[1])

    def marginal_x(self) -> np.ndarray:
        return self.px_y.sum(axis=1)

    def marginal_y(self) -> np.ndarray:
        return self.px_y.sum(axis=0)

    def conditional_y_given_x(self) -> np.ndarray:
        """Rows p(y | x); rows with zero marginal mass are set uniform."""
        px = self.marginal_x()
        ny = self.alphabet_y
        out = np.full((self.alphabet_x, ny), 1.0 / ny)
        pos = px > 0.0
        out[pos] = self.px_y[pos] / px[pos, None]
        return out

    def swap(self) -> "JointTable":
        """The same distribution with axes exchanged, p(y, x)."""
        return JointTable(self.px_y.T)

    def to_json(self) -> str:
        nx, ny = self.px_y.shape
        return json.dumps(
            {
                "rows": [[float(v) for v in row] for row in self.px_y],
                "row_labels": list(self.row_labels or (f"x{i}" for i in range(nx))),
                "col_labels": list(self.col_labels or (f"y{j}" for j in range(ny))),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "JointTable":
        obj = json.loads(text)
        return cls(
            np.asarray(obj["rows"], dtype=float),
            row_labels=tuple(obj.get("row_labels") or ()) or None,
            col_labels=tuple(obj.get("col_labels") or ()) or None,
        )


@dataclass(frozen=True)
class Channel:
    """Stochastic map q(out | in) as a row-stochastic matrix.

    ``cond[i, o]`` is the probability of emitting ``o`` from input ``i``.
    Every row must sum to one within 1e-12.
    """

    cond: np.ndarray
    row_labels: tuple[str, ...] | None = None
    col_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        a = np.asarray(self.cond, dtype=float)
        if a.ndim != 2 or a.size == 0:
            raise DistributionError("channel must be a nonempty 2-D matrix")
        if not np.all(np.isfinite(a)):
            raise DistributionError("channel contains non-finite entries")
        if np.any(a < -SUM_TOL):
            raise DistributionError("channel contains negative entries")
        a = np.clip(a, 0.0, None)
        sums = a.sum(axis=1)
        bad = np.abs(sums - 1.0) > SUM_TOL
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DistributionError(
                f"channel row {i} sums to {float(sums[i])!r}, expected 1 within {SUM_TOL}"
            )
        object.__setattr__(self, "cond", _readonly(a))

    @classmethod
    def from_array(cls, arr, normalize: bool = False) -> "Channel":
        a = np.asarray(arr, dtype=float)
        if normalize:
            s = a.sum(axis=1, keepdims=True)
            if np.any(~np.isfinite(s)) or np.any(s <= 0):
                raise DistributionError("cannot normalize: some row has no mass")
            a = a / s
        return cls(a)

    @classmethod
    def identity(cls, n: int) -> "Channel":
        return cls(np.eye(n))

    @classmethod
    def uniform(cls, n_in: int, n_out: int) -> "Channel":
        return cls(np.full((n_in, n_out), 1.0 / n_out))

    @classmethod
    def deterministic(cls, assignment: Sequence[int], n_out: int) -> "Channel":
        """Channel sending input i to output assignment[i] with certainty."""
        m = np.zeros((len(assignment), n_out))
        for i, z in enumerate(assignment):
            if not 0 <= int(z) < n_out:
                raise UsageError(f"assignment[{i}]={z} outside output alphabet")
            m[i, int(z)] = 1.0
        return cls(m)

    @classmethod
    def constant(cls, n_in: int, out: int, n_out: int) -> "Channel":
        return cls.deterministic([out] * n_in, n_out)

    @property
    def in_size(self) -> int:
        return int(self.cond.shape[0])

    @property
    def out_size(self) -> int:
        return int(self.cond.shape[1])

    def apply(self, p_in: Sequence[float] | np.ndarray) -> np.ndarray:
        """Push an input marginal through the channel."""
        p = _validate_prob_vector(np.asarray(p_in, dtype=float), "p_in", tol=1e-9)
        if p.size != self.in_size:
            raise UsageError(f"marginal size {p.size} != channel input {self.in_size}")
        return p @ self.cond

    def input_joint(self, p_in: Sequence[float] | np.ndarray) -> JointTable:
        """Joint p(in, out) induced by an input marginal."""
        p = _validate_prob_vector(np.asarray(p_in, dtype=float), "p_in", tol=1e-9)
        if p.size != self.in_size:
            raise UsageError(f"marginal size {p.size} != channel input {self.in_size}")
        return JointTable(p[:, None] * self.cond)

    def push_joint(self, j: JointTable) -> JointTable:
        """Map a joint p(x, y) through q(z | x), giving p(z, y) = sum_x p(x,y) q(z|x)."""
        if j.alphabet_x != self.in_size:
            raise UsageError(
                f"joint X alphabet {j.alphabet_x} != channel input {self.in_size}"
            )
        return JointTable(self.cond.T @ j.px_y)

    def then(self, nxt: "Channel") -> "Channel":
        """Composition: this channel followed by ``nxt``."""
        if nxt.in_size != self.out_size:
            raise UsageError(
                f"cannot compose: output {self.out_size} != next input {nxt.in_size}"
            )
        return Channel(self.cond @ nxt.cond)

    def to_json(self) -> str:
        n_in, n_out = self.cond.shape
        return json.dumps(
            {
                "rows": [[float(v) for v in row] for row in self.cond],
                "row_labels": list(self.row_labels or (f"in{i}" for i in range(n_in))),
                "col_labels": list(self.col_labels or (f"out{j}" for j in range(n_out))),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "Channel":
        obj = json.loads(text)
        return cls(
            np.asarray(obj["rows"], dtype=float),
            row_labels=tuple(obj.get("row_labels") or ()) or None,
            col_labels=tuple(obj.get("col_labels") or ()) or None,
        )


def mutual_information(j: JointTable) -> float:
    """I(X; Y) in bits, computed exactly from the joint table.

    Always nonnegative and bounded by min(H(X), H(Y)).
    """
    p = j.px_y
    px = j.marginal_x()
    py = j.marginal_y()
    mask = p > 0.0
    if not mask.any():
        return 0.0
    prod = np.outer(px, py)
    terms = p[mask] * (np.log2(p[mask]) - np.log2(prod[mask]))
    return max(float(terms.sum()), 0.0)


def joint_entropy(j: JointTable) -> float:
    """H(X, Y) in bits."""
    p = j.px_y[j.px_y > 0.0]
    return float(-(p * np.log2(p)).sum()) if p.size else 0.0


def conditional_entropy(j: JointTable, given: str | int) -> float:
    """Conditional entropy in bits: H(X | Y) for given="y", H(Y | X) for given="x".

    Satisfies the chain rule H(X, Y) = H(Y) + H(X | Y) within 1e-9.
    Raises UsageError for an unrecognized axis.
    """
    axis = {"x": "x", 0: "x", "y": "y", 1: "y"}.get(given)
    if axis is None:
        raise UsageError(f"given must be 'x'/'y' (or 0/1), got {given!r}")
    h_joint = joint_entropy(j)
    if axis == "y":
        return max(h_joint - entropy(j.marginal_y()), 0.0)
    return max(h_joint - entropy(j.marginal_x()), 0.0)


@dataclass(frozen=True)
class MIEstimate:
    """A mutual-information estimate with a bootstrap percentile interval.

    ``estimator_id`` is one of "exact", "plugin", "miller_madow". The interval
    is widened, if necessary, so that ci_low <= value <= ci_high, and the
    value is clamped at zero after bias correction.
    """

    value: float
    ci_low: float
    ci_high: float
    n_samples: int
    estimator_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "ci_low", min(self.ci_low, self.value))
        object.__setattr__(self, "ci_high", max(self.ci_high, self.value))

    def covers(self, target: float) -> bool:
        return self.ci_low <= target <= self.ci_high

    @classmethod
    def exact(cls, j: JointTable) -> "MIEstimate":
        v = mutual_information(j)
        return cls(value=v, ci_low=v, ci_high=v, n_samples=0, estimator_id="exact")


_ESTIMATORS = ("plugin", "miller_madow")


def _mi_from_codes(codes: np.ndarray, n_cells: int, ky: int, estimator: str) -> float:
    """Plug-in (optionally Miller-Madow corrected) MI from flat cell codes."""
    counts = np.bincount(codes, minlength=n_cells).astype(float)
    n = codes.size
    p = counts / n
    grid = p.reshape(-1, ky)
    px = grid.sum(axis=1)
    py = grid.sum(axis=0)
    mask = grid > 0.0
    prod = np.outer(px, py)
    value = float((grid[mask] * (np.log2(grid[mask]) - np.log2(prod[mask]))).sum())
    if estimator == "miller_madow":
        kx_obs = int((px > 0).sum())
        ky_obs = int((py > 0).sum())
        # Plug-in MI is biased upward by ~ (|X|-1)(|Y|-1) / (2 n ln 2);
        # the correction removes that bias and may drive the value negative,
        # hence the clamp at zero below.
        value -= (kx_obs * ky_obs - kx_obs - ky_obs + 1) / (2.0 * n * LN2)
    return max(value, 0.0)


def estimate_mi_from_samples(
    pairs: Sequence[tuple[int, int]] | np.ndarray,
    estimator_id: str = "plugin",
    bootstrap_reps: int = 1000,
    seed: int = 0,
) -> MIEstimate:
    """Empirical mutual information from (x, y) samples with a bootstrap CI.

    The plug-in estimate uses empirical cell frequencies over the observed
    alphabets. "miller_madow" additionally removes the first-order plug-in
    bias (|X||Y| - |X| - |Y| + 1) / (2 n ln 2) and clamps at zero. The
    bootstrap resamples pairs with replacement ``bootstrap_reps`` times;
    the interval is the basic (reverse-percentile) interval built from the
    2.5/97.5 replicate percentiles and clamped below at zero. A plain
    percentile interval can never reach the exact value when the truth sits
    on the MI boundary (e.g. a noiseless copy: every replicate lies below
    one bit); reflecting the percentiles around the point estimate restores
    coverage there. Each replicate derives its own generator from (seed,
    replicate index), so results are deterministic under a fixed seed.
    """
    if estimator_id not in _ESTIMATORS:
        raise UsageError(
            f"estimator_id must be one of {_ESTIMATORS}, got {estimator_id!r}"
        )
    a = np.asarray(pairs, dtype=np.int64)
    if a.size == 0:
        raise UsageError("no samples provided")
    if a.ndim != 2 or a.shape[1] != 2:
        raise UsageError(f"pairs must have shape (n, 2), got {a.shape}")
    n = a.shape[0]
    if n < 10:
        raise UsageError(f"need at least 10 samples, got {n}")
    if bootstrap_reps < 1:
        raise UsageError("bootstrap_reps must be >= 1")

    # Compact to observed alphabets so bincount stays small.
    _, xi = np.unique(a[:, 0], return_inverse=True)
    _, yi = np.unique(a[:, 1], return_inverse=True)
    kx = int(xi.max()) + 1
    ky = int(yi.max()) + 1
    codes = xi * ky + yi
    n_cells = kx * ky

    value = _mi_from_codes(codes, n_cells, ky, estimator_id)

    children = np.random.SeedSequence(seed).spawn(bootstrap_reps)
    reps = np.empty(bootstrap_reps)
    for r, child in enumerate(children):
        rng = np.random.default_rng(child)
        idx = rng.integers(0, n, size=n)
        reps[r] = _mi_from_codes(codes[idx], n_cells, ky, estimator_id)
    q_lo, q_hi = np.percentile(reps, [2.5, 97.5])
    return MIEstimate(
        value=value,
        ci_low=max(2.0 * value - float(q_hi), 0.0),
        ci_high=2.0 * value - float(q_lo),
        n_samples=n,
        estimator_id=estimator_id,
    )


def epistemic_entropy_rate(
    model_predictor: Channel,
    stream,
    horizon: int,
    contexts: Sequence[int] | np.ndarray | None = None,
    floor: float | None = PROB_EPS,
) -> float:
    """Average model surprise per step over the final ``horizon`` steps, in bits.

    ``model_predictor`` maps a context index to a distribution over the next
    symbol. ``stream`` is a symbol sequence (or any object with ``symbols``
    and optional ``contexts`` attributes). When no contexts are supplied the
    previous symbol is used as the context, which requires one extra leading
    symbol beyond the horizon.

    Probabilities are floored at ``floor`` inside the logarithm so a single
    uncovered event cannot produce an infinite rate; pass ``floor=None`` to
    disable flooring, in which case an uncovered event raises
    ModelCoverageError.
    """
    if hasattr(stream, "symbols"):
        symbols = np.asarray(stream.symbols, dtype=np.int64)
        if contexts is None and getattr(stream, "contexts", None) is not None:
            contexts = stream.contexts
    else:
        symbols = np.asarray(stream, dtype=np.int64)
    if horizon < 1:
        raise UsageError("horizon must be >= 1")
    t = symbols.size

    if contexts is not None:
        ctx = np.asarray(contexts, dtype=np.int64)
        if ctx.size != t:
            raise UsageError("contexts must align 1:1 with symbols")
        if t < horizon:
            raise UsageError(f"stream length {t} < horizon {horizon}")
        eval_ctx = ctx[t - horizon :]
        eval_sym = symbols[t - horizon :]
    else:
        if t < horizon + 1:
            raise UsageError(
                f"stream length {t} < horizon+1 = {horizon + 1} "
                "(previous-symbol contexts need one leading symbol)"
            )
        eval_ctx = symbols[t - horizon - 1 : t - 1]
        eval_sym = symbols[t - horizon :]

    if eval_ctx.min() < 0 or eval_ctx.max() >= model_predictor.in_size:
        raise ModelCoverageError(
            f"context index outside predictor rows 0..{model_predictor.in_size - 1}"
        )
    if eval_sym.min() < 0 or eval_sym.max() >= model_predictor.out_size:
        raise UsageError("observed symbol outside predictor output alphabet")

    p = model_predictor.cond[eval_ctx, eval_sym]
    if floor is None:
        if np.any(p <= 0.0):
            raise ModelCoverageError(
                "predictor assigns zero probability to an observed step "
                "and flooring is disabled"
            )
    else:
        p = np.maximum(p, floor)
    return float(-np.log2(p).mean())


def random_joint(
    rng: np.random.Generator, nx: int, ny: int, concentration: float = 1.0
) -> JointTable:
    """A random joint table with Dirichlet(concentration) cell mass."""
    cells = rng.dirichlet(np.full(nx * ny, concentration))
    return JointTable(cells.reshape(nx, ny))


def random_channel(
    rng: np.random.Generator, n_in: int, n_out: int, concentration: float = 1.0
) -> Channel:
    """A random row-stochastic channel with Dirichlet(concentration) rows."""
    rows = rng.dirichlet(np.full(n_out, concentration), size=n_in)
    return Channel(rows)
