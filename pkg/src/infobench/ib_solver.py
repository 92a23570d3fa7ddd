"""Information-bottleneck encoders and the relevance-rate frontier.

Given an exact joint p(x, y), a bottleneck size |Z| and a trade-off weight
beta, the self-consistent iterations alternate

    q(z)      = sum_x p(x) q(z|x)
    q(y|z)    = sum_x p(x,y) q(z|x) / q(z)
    q(z|x)  propto  q(z) * exp(-beta * KL(p(y|x) || q(y|z)))

until the objective F = I(X;Z) - beta * I(Z;Y) (in bits) stops moving.
The frontier is swept over a beta schedule with seeded restarts; the
rate-distortion gap of an arbitrary candidate encoder is measured against
the swept curve with distortion D := I(X;Y) - I(Z;Y).

Sweeps may be parallelized across (beta, restart) pairs since every pair
derives its own generator from (seed, beta index, restart index).
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import UsageError
from .info_core import Channel, JointTable, derive_rng, mutual_information

#: Rates below this are treated as exactly zero when forming efficiency ratios.
RATE_EPS = 1e-12

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 5000
DEFAULT_RESTARTS = 8
#: Concentration of the Dirichlet perturbation used to initialize encoder rows.
#: A pure-uniform initialization is itself a fixed point and must be avoided.
INIT_CONCENTRATION = 5.0


@dataclass(frozen=True)
class IBPoint:
    """One converged (or attempted) point of the bottleneck trade-off.

    epsilon_ib = relevance / rate lies in [0, 1] by the data-processing
    inequality; the 0/0 case at zero rate is defined as 0.
    """

    beta: float
    rate: float
    relevance: float
    epsilon_ib: float
    iterations: int
    converged: bool


@dataclass(frozen=True)
class RDGap:
    """Excess distortion of a candidate encoder over the frontier at equal rate."""

    gap_bits: float
    encoder_rate: float
    encoder_relevance: float
    frontier_relevance: float
    extrapolated: bool


@dataclass(frozen=True)
class FrontierCurve:
    """Frontier samples ordered by beta, plus achievable skeleton points.

    ``points`` holds the per-beta best operating points (the monotone sweep
    path); ``skeleton`` holds additional converged operating points found by
    the structured partition starts at the top anchor. Skeleton points are
    genuine achievable encoders and participate in interpolation, but they
    are not part of the beta-ordered path.
    """

    points: tuple[IBPoint, ...]
    source_ixy: float
    z_size: int
    skeleton: tuple[IBPoint, ...] = ()

    def converged_points(self) -> tuple[IBPoint, ...]:
        return tuple(p for p in self.points if p.converged)

    def relevance_at(self, rate: float) -> tuple[float, bool]:
        """Frontier relevance at a given rate by monotone piecewise-linear interpolation.

        The curve is anchored at (0, 0) and its relevance is made nondecreasing
        in rate (running maximum) before interpolating. Returns (relevance,
        extrapolated) where ``extrapolated`` flags a query beyond the largest
        swept rate; there the top relevance is returned.
        """
        pts = sorted(
            list(self.converged_points()) + [p for p in self.skeleton if p.converged],
            key=lambda p: (p.rate, p.relevance),
        )
        if not pts:
            raise UsageError("frontier has no converged points")
        rates = [0.0] + [p.rate for p in pts]
        rels = [0.0] + [p.relevance for p in pts]
        best = -math.inf
        env = []
        for u in rels:
            best = max(best, u)
            env.append(best)
        if rate > rates[-1] + RATE_EPS:
            return env[-1], True
        return float(np.interp(rate, rates, env)), False

    def to_csv(self) -> str:
        """CSV rows: the beta-ordered path, then any skeleton points."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["beta", "rate_bits", "relevance_bits", "epsilon_ib", "converged"])
        for p in list(self.points) + list(self.skeleton):
            w.writerow(
                [
                    repr(float(p.beta)),
                    repr(float(p.rate)),
                    repr(float(p.relevance)),
                    repr(float(p.epsilon_ib)),
                    int(p.converged),
                ]
            )
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, source_ixy: float, z_size: int) -> "FrontierCurve":
        rows = list(csv.reader(io.StringIO(text)))
        pts = []
        for row in rows[1:]:
            if not row:
                continue
            beta, rate, rel, eps, conv = row
            pts.append(
                IBPoint(
                    beta=float(beta),
                    rate=float(rate),
                    relevance=float(rel),
                    epsilon_ib=float(eps),
                    iterations=0,
                    converged=bool(int(conv)),
                )
            )
        return cls(points=tuple(pts), source_ixy=source_ixy, z_size=z_size)


def induced_joints(encoder: Channel, j: JointTable) -> tuple[JointTable, JointTable]:
    """The joints (X, Z) and (Z, Y) induced by q(z|x) on p(x, y)."""
    if encoder.in_size != j.alphabet_x:
        raise UsageError(
            f"encoder input {encoder.in_size} != joint X alphabet {j.alphabet_x}"
        )
    xz = encoder.input_joint(j.marginal_x())
    zy = encoder.push_joint(j)
    return xz, zy


def epsilon_ib(encoder: Channel, j: JointTable) -> float:
    """Bottleneck efficiency I(Z;Y) / I(X;Z) of an encoder against a source joint.

    Returns 0 when the rate I(X;Z) is below 1e-12 (a degenerate encoder
    predicts nothing, so its efficiency is defined as zero).
    """
    xz, zy = induced_joints(encoder, j)
    rate = mutual_information(xz)
    if rate < RATE_EPS:
        return 0.0
    return mutual_information(zy) / rate


def _rate_relevance(
    q: np.ndarray, px: np.ndarray, p: np.ndarray
) -> tuple[float, float]:
    """I(X;Z) and I(Z;Y) in bits from encoder rows q(z|x), marginal px, joint p."""
    qz = px @ q
    # rate: sum_x p(x) q(z|x) log2(q(z|x)/q(z))
    mask = (q > 0.0) & (px[:, None] > 0.0) & (qz[None, :] > 0.0)
    rate = float(
        ((px[:, None] * q)[mask] * (np.log2(q[mask]) - np.log2(np.broadcast_to(qz, q.shape)[mask]))).sum()
    )
    pzy = q.T @ p
    py = p.sum(axis=0)
    maskz = (pzy > 0.0) & (qz[:, None] > 0.0) & (py[None, :] > 0.0)
    prod = np.outer(qz, py)
    relevance = float((pzy[maskz] * (np.log2(pzy[maskz]) - np.log2(prod[maskz]))).sum())
    return max(rate, 0.0), max(relevance, 0.0)


def _softmax_rows(logw: np.ndarray) -> np.ndarray:
    m = logw.max(axis=1, keepdims=True)
    # Rows that are all -inf cannot occur for x with p(x) > 0 (see update
    # derivation); guard anyway by sending such rows to uniform.
    safe = np.where(np.isfinite(m), m, 0.0)
    w = np.exp(logw - safe)
    s = w.sum(axis=1, keepdims=True)
    dead = s[:, 0] <= 0.0
    if np.any(dead):
        w[dead] = 1.0
        s = w.sum(axis=1, keepdims=True)
    return w / s


def ib_fixed_point(
    j: JointTable,
    z_size: int,
    beta: float,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    init: np.ndarray | None = None,
) -> tuple[Channel, IBPoint]:
    """Run self-consistent bottleneck iterations to a fixed point.

    Returns the encoder q(z|x) and its IBPoint. ``converged`` is False when
    the objective is still moving by more than ``tol`` after ``max_iter``
    iterations (not an error). Deterministic under a fixed seed.
    """
    if z_size < 1:
        raise UsageError("z_size must be >= 1")
    if beta < 0:
        raise UsageError("beta must be >= 0")
    p = j.px_y
    px = j.marginal_x()
    nx, ny = p.shape

    py_x = j.conditional_y_given_x()
    log_py_x = np.where(py_x > 0.0, np.log(np.maximum(py_x, 1e-300)), 0.0)
    # Per-row negative entropy term of KL(p(y|x) || q(y|z)), in nats.
    h_term = (py_x * log_py_x).sum(axis=1)

    if init is not None:
        q = np.asarray(init, dtype=float).copy()
        if q.shape != (nx, z_size):
            raise UsageError(f"init must have shape {(nx, z_size)}")
    else:
        rng = derive_rng(seed)
        q = rng.dirichlet(np.full(z_size, INIT_CONCENTRATION), size=nx)

    f_prev = math.inf
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        qz = px @ q
        pzy = q.T @ p
        alive = qz > RATE_EPS
        qy_z = np.full((z_size, ny), 1.0 / ny)
        qy_z[alive] = pzy[alive] / qz[alive, None]

        # KL(p(y|x) || q(y|z)) in nats: sum_y p(y|x) [ln p(y|x) - ln q(y|z)]
        log_qy_z = np.where(qy_z > 0.0, np.log(np.maximum(qy_z, 1e-300)), -np.inf)
        cross = py_x @ np.where(np.isfinite(log_qy_z), log_qy_z, 0.0).T
        inf_mask = (py_x[:, None, :] > 0.0) & ~np.isfinite(log_qy_z)[None, :, :]
        kl = h_term[:, None] - cross
        kl[inf_mask.any(axis=2)] = np.inf

        with np.errstate(divide="ignore"):
            log_qz = np.where(qz > 0.0, np.log(np.maximum(qz, 1e-300)), -np.inf)
        logw = log_qz[None, :] - beta * kl
        q = _softmax_rows(logw)

        rate, relevance = _rate_relevance(q, px, p)
        f = rate - beta * relevance
        if abs(f - f_prev) < tol:
            converged = True
            break
        f_prev = f

    rate, relevance = _rate_relevance(q, px, p)
    eps = relevance / rate if rate >= RATE_EPS else 0.0
    point = IBPoint(
        beta=float(beta),
        rate=rate,
        relevance=relevance,
        epsilon_ib=eps,
        iterations=iterations,
        converged=converged,
    )
    return Channel(q), point


def default_beta_schedule(
    n: int = 40, lo: float = 0.1, hi: float = 100.0
) -> np.ndarray:
    """Log-spaced beta sweep; 40 points in [0.1, 100] by default."""
    return np.logspace(math.log10(lo), math.log10(hi), n)


def ib_objective(point: IBPoint) -> float:
    """Sweep selection objective: relevance - rate / beta (higher is better)."""
    if point.beta <= 0.0:
        return -point.rate
    return point.relevance - point.rate / point.beta


def _near_identity_init(nx: int, z_size: int) -> np.ndarray:
    """Each input in its own cluster; a structured warm start.

    Merged clusters can never split under the self-consistent iteration, so
    generic random inits sometimes lose the identity limit at large beta for
    sources with nearly coincident posteriors. The rows are exactly one-hot:
    any soft contamination would pollute the first iteration's cluster
    predictives and let init noise decide between near-twin posteriors
    (merging them is absorbing). Unlike the uniform encoder, a hard
    assignment has no self-reproducing symmetry, so the dynamics still
    relax it freely at small beta.
    """
    q = np.zeros((nx, z_size))
    for x in range(nx):
        q[x, x % z_size] = 1.0
    return q


#: Upper bound on the number of structured partition inits per solve.
MAX_PARTITION_INITS = 64


def _partitions_for_order(order: np.ndarray, z_size: int) -> list[tuple[int, ...]]:
    """Assignments of every contiguous partition (any block count <= z_size)."""
    nx = order.size
    out = []
    for n_blocks in range(min(z_size, nx), 0, -1):
        for cuts in itertools.combinations(range(1, nx), n_blocks - 1):
            assign = [0] * nx
            bounds = (0, *cuts, nx)
            for z, (lo, hi) in enumerate(zip(bounds, bounds[1:])):
                for x in order[lo:hi]:
                    assign[int(x)] = z
            out.append(tuple(assign))
    return out


def _contiguous_partition_inits(
    j: JointTable, z_size: int, all_orderings: bool = False
) -> list[np.ndarray]:
    """One-hot inits from posterior-contiguous partitions.

    Relevance-optimal deterministic quantizers are contiguous when inputs
    are ordered by posterior (exact for binary relevance variables), so
    seeding the iterations from every contiguous partition covers the
    deterministic skeleton of the curve. With ``all_orderings`` the
    partitions contiguous in each single posterior coordinate are included
    as well, which is what multi-valued relevance variables need (an input
    worth separating is extremal in some coordinate, not necessarily in the
    lexicographic order). Counts stay tiny at desk scale.
    """
    nx = j.alphabet_x
    if z_size < 2:
        return []
    post = j.conditional_y_given_x()
    orders = [np.lexsort(post.T[::-1])]
    if all_orderings and post.shape[1] > 2:
        for k in range(post.shape[1]):
            orders.append(np.argsort(post[:, k], kind="stable"))
    seen: set[tuple[int, ...]] = set()
    inits = []
    for order in orders:
        for assign in _partitions_for_order(order, z_size):
            canon = _canonical_assignment(assign)
            if canon in seen:
                continue
            seen.add(canon)
            q = np.zeros((nx, z_size))
            for x, z in enumerate(assign):
                q[x, z] = 1.0
            inits.append(q)
            if len(inits) >= MAX_PARTITION_INITS:
                return inits
    return inits


def _canonical_assignment(assign: tuple[int, ...]) -> tuple[int, ...]:
    """Relabel cluster ids by first appearance so relabelings compare equal."""
    remap: dict[int, int] = {}
    out = []
    for z in assign:
        if z not in remap:
            remap[z] = len(remap)
        out.append(remap[z])
    return tuple(out)


def _candidate_points(
    j: JointTable,
    z_size: int,
    beta: float,
    seed: int,
    restarts: int,
    tol: float,
    max_iter: int,
    seed_key: tuple[int, ...],
) -> list[tuple[Channel, IBPoint]]:
    """Converge every candidate init: random restarts plus structured starts
    (near-identity when capacity permits, posterior-contiguous partitions)."""
    if restarts < 1:
        raise UsageError("restarts must be >= 1")
    nx = j.alphabet_x
    inits = []
    for r in range(restarts):
        rng = derive_rng(seed, *seed_key, r)
        inits.append(rng.dirichlet(np.full(z_size, INIT_CONCENTRATION), size=nx))
    if z_size >= nx:
        inits.append(_near_identity_init(nx, z_size))
    inits.extend(_contiguous_partition_inits(j, z_size))
    return [
        ib_fixed_point(j, z_size, beta, seed=seed, tol=tol, max_iter=max_iter,
                       init=init)
        for init in inits
    ]


def best_fixed_point(
    j: JointTable,
    z_size: int,
    beta: float,
    seed: int,
    restarts: int = DEFAULT_RESTARTS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed_key: tuple[int, ...] = (),
) -> tuple[Channel, IBPoint]:
    """Best candidate by the sweep objective; ties prefer lower rate."""
    best: tuple[Channel, IBPoint] | None = None
    best_obj = -math.inf
    for enc, pt in _candidate_points(
        j, z_size, beta, seed, restarts, tol, max_iter, seed_key
    ):
        obj = ib_objective(pt)
        if (
            best is None
            or obj > best_obj + 1e-12
            or (abs(obj - best_obj) <= 1e-12 and pt.rate < best[1].rate)
        ):
            best = (enc, pt)
            best_obj = obj
    assert best is not None
    return best


#: Quasi-infinite trade-off weight anchoring the top of every sweep.
ANCHOR_BETA = 1e6


def sweep_frontier(
    j: JointTable,
    z_size: int,
    betas: Sequence[float] | np.ndarray | None = None,
    seed: int = 0,
    restarts: int = DEFAULT_RESTARTS,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    anchor_top: bool = True,
) -> FrontierCurve:
    """Sweep the frontier over a beta schedule with best-of-restarts selection.

    Non-converged points stay in the curve flagged ``converged=False``; the
    monotonicity invariants apply to the converged subset. Unless
    ``anchor_top`` is disabled, one extra quasi-infinite-beta point is
    appended so the curve spans its full rate range even on weak-signal
    sources whose top end sits beyond the scheduled betas.
    """
    if betas is None:
        betas = default_beta_schedule()
    b = np.asarray(betas, dtype=float)
    if b.size == 0:
        raise UsageError("betas must be nonempty")
    if np.any(b <= 0):
        raise UsageError("betas must be positive")
    if np.any(np.diff(b) < 0):
        raise UsageError("betas must be sorted ascending")
    schedule = [float(x) for x in b]
    if anchor_top and b[-1] < ANCHOR_BETA:
        schedule.append(ANCHOR_BETA)

    points = []
    skeleton: list[IBPoint] = []
    for bi, beta in enumerate(schedule):
        if anchor_top and beta == ANCHOR_BETA:
            # At the anchor, keep every converged structured candidate: the
            # deterministic skeleton of the curve, not just the best point.
            # Posterior-contiguous partitions (in every single coordinate)
            # enter both as direct evaluations and as converged refinements:
            # a partition that is not self-consistent still is an achievable
            # operating point and anchors the envelope at its exact rate.
            candidates = _candidate_points(
                j, z_size, beta, seed, restarts, tol, max_iter, (bi,)
            )
            px = j.marginal_x()
            for init in _contiguous_partition_inits(j, z_size, all_orderings=True):
                rate, rel = _rate_relevance(init, px, j.px_y)
                eps = rel / rate if rate >= RATE_EPS else 0.0
                candidates.append((
                    Channel(init),
                    IBPoint(beta=beta, rate=rate, relevance=rel, epsilon_ib=eps,
                            iterations=0, converged=True),
                ))
                candidates.append(
                    ib_fixed_point(j, z_size, beta, seed=seed, tol=tol,
                                   max_iter=max_iter, init=init)
                )
            best = None
            best_obj = -math.inf
            seen = set()
            for _, pt in candidates:
                obj = ib_objective(pt)
                if best is None or obj > best_obj + 1e-12 or (
                    abs(obj - best_obj) <= 1e-12 and pt.rate < best.rate
                ):
                    best, best_obj = pt, obj
                key = (round(pt.rate, 12), round(pt.relevance, 12))
                if pt.converged and key not in seen:
                    seen.add(key)
                    skeleton.append(pt)
            points.append(best)
            skeleton = [pt for pt in skeleton if pt is not best]
        else:
            _, pt = best_fixed_point(
                j,
                z_size,
                beta,
                seed=seed,
                restarts=restarts,
                tol=tol,
                max_iter=max_iter,
                seed_key=(bi,),
            )
            points.append(pt)
    return FrontierCurve(
        points=tuple(points),
        source_ixy=mutual_information(j),
        z_size=z_size,
        skeleton=tuple(skeleton),
    )


def rd_gap(encoder: Channel, j: JointTable, frontier: FrontierCurve) -> RDGap:
    """Rate-distortion gap of a candidate encoder against a swept frontier.

    With distortion D = I(X;Y) - I(Z;Y), the gap is D_achieved minus
    D_frontier at the encoder's rate, i.e. the frontier relevance at that
    rate minus the encoder's relevance. Nonnegative up to -1e-6 numerical
    slack when the frontier is adequate. A rate beyond the swept range is
    flagged ``extrapolated`` rather than raising.
    """
    if not frontier.points:
        raise UsageError("frontier is empty")
    xz, zy = induced_joints(encoder, j)
    rate = mutual_information(xz)
    relevance = mutual_information(zy)
    front_rel, extrapolated = frontier.relevance_at(rate)
    return RDGap(
        gap_bits=front_rel - relevance,
        encoder_rate=rate,
        encoder_relevance=relevance,
        frontier_relevance=front_rel,
        extrapolated=extrapolated,
    )


def enumerate_deterministic_encoders(n_in: int, n_out: int) -> Iterator[Channel]:
    """All n_out ** n_in deterministic encoders from n_in inputs to n_out outputs.

    Exhaustive baseline used to check frontier dominance at desk scale.
    """
    for assignment in itertools.product(range(n_out), repeat=n_in):
        yield Channel.deterministic(assignment, n_out)
