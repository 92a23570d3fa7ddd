"""Seeded synthetic environments with exactly known generative structure.

Every generator exposes ground truth (joint table, transition kernel,
per-context rates) alongside the sampled stream, so downstream estimates
can always be checked against exact values. Generators are pure functions
of (spec, seed) and are bit-for-bit reproducible.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CapacityError, DistributionError, UsageError
from .info_core import Channel, JointTable, derive_rng, mutual_information

ENV_KINDS = ("rule_exception", "markov_plain", "markov_confounded", "hierarchical")

#: Total observed-alphabet guard for the hierarchical generator.
MAX_HIERARCHY_ALPHABET = 4096


@dataclass(frozen=True)
class EnvSpec:
    """A named environment kind plus its numeric parameters and seed."""

    kind: str
    params: dict
    seed: int

    def __post_init__(self) -> None:
        if self.kind not in ENV_KINDS:
            raise UsageError(f"unknown env kind {self.kind!r}; expected one of {ENV_KINDS}")
        validator = _VALIDATORS[self.kind]
        validator(self.params)

    def to_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "params": self.params, "seed": self.seed},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "EnvSpec":
        obj = json.loads(text)
        return cls(kind=obj["kind"], params=obj["params"], seed=int(obj["seed"]))


def _require(params: dict, keys: Sequence[str], kind: str) -> None:
    missing = [k for k in keys if k not in params]
    if missing:
        raise UsageError(f"{kind} params missing {missing}")


def _check_prob(params: dict, keys: Sequence[str]) -> None:
    for k in keys:
        if k in params:
            v = float(params[k])
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"param {k}={v} outside [0, 1]")


def _validate_rule_exception(params: dict) -> None:
    _require(params, ["exception_rate", "context_count", "context_shift", "length"], "rule_exception")
    _check_prob(params, ["exception_rate", "context_shift"])
    if int(params["context_count"]) < 1:
        raise UsageError("context_count must be >= 1")
    if int(params["length"]) < 1:
        raise UsageError("length must be >= 1")


def _validate_markov(params: dict) -> None:
    _require(params, ["transition", "length"], "markov")
    rows = np.asarray(params["transition"], dtype=float)
    if rows.ndim != 2 or rows.shape[0] != rows.shape[1]:
        raise UsageError("transition must be a square matrix")
    if int(params["length"]) < 1:
        raise UsageError("length must be >= 1")


def _validate_confounded(params: dict) -> None:
    _validate_markov(params)
    _require(params, ["emission"], "markov_confounded")


def _validate_hierarchical(params: dict) -> None:
    _require(params, ["levels", "branch_entropy", "noise", "length"], "hierarchical")
    if int(params["levels"]) < 2:
        raise UsageError("levels must be >= 2")
    noise = params["noise"]
    vals = noise if isinstance(noise, (list, tuple)) else [noise]
    for v in vals:
        if not 0.0 <= float(v) <= 1.0:
            raise UsageError(f"noise value {v} outside [0, 1]")


_VALIDATORS = {
    "rule_exception": _validate_rule_exception,
    "markov_plain": _validate_markov,
    "markov_confounded": _validate_confounded,
    "hierarchical": _validate_hierarchical,
}


@dataclass
class SymbolStream:
    """A sampled symbol sequence with optional aligned context indices.

    ``metadata`` records the generator's exact ground truth (kernels, rates,
    analytic statistics) for downstream consistency checks.
    """

    symbols: np.ndarray
    alphabet: int
    contexts: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if self.symbols.ndim != 1:
            raise UsageError("symbols must be 1-D")
        if self.symbols.size and (
            self.symbols.min() < 0 or self.symbols.max() >= self.alphabet
        ):
            raise UsageError("symbol outside alphabet")
        if self.contexts is not None:
            self.contexts = np.asarray(self.contexts, dtype=np.int64)
            if self.contexts.shape != self.symbols.shape:
                raise UsageError("contexts must align 1:1 with symbols")

    def __len__(self) -> int:
        return int(self.symbols.size)

    @property
    def context_count(self) -> int:
        if self.contexts is None:
            return 0
        return int(self.contexts.max()) + 1 if self.contexts.size else 0

    def save_text(self) -> str:
        """Line-oriented text form: a header comment, then one step per line."""
        meta = self.metadata or {}
        header = (
            f"#alphabet={self.alphabet} "
            f"contexts={self.context_count} "
            f"seed={meta.get('seed', -1)} "
            f"kind={meta.get('kind', 'unknown')}"
        )
        lines = [header]
        if self.contexts is None:
            lines.extend(str(int(s)) for s in self.symbols)
        else:
            lines.extend(
                f"{int(s)} {int(c)}" for s, c in zip(self.symbols, self.contexts)
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def load_text(cls, text: str) -> "SymbolStream":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("#"):
            raise UsageError("stream text must start with a '#...' header line")
        fields = dict(
            kv.split("=", 1) for kv in lines[0][1:].split() if "=" in kv
        )
        alphabet = int(fields["alphabet"])
        sym = []
        ctx = []
        has_ctx = None
        for ln in lines[1:]:
            parts = ln.split()
            if has_ctx is None:
                has_ctx = len(parts) == 2
            sym.append(int(parts[0]))
            if has_ctx:
                ctx.append(int(parts[1]))
        meta = {"kind": fields.get("kind", "unknown"), "seed": int(fields.get("seed", -1))}
        return cls(
            symbols=np.asarray(sym, dtype=np.int64),
            alphabet=alphabet,
            contexts=np.asarray(ctx, dtype=np.int64) if has_ctx else None,
            metadata=meta,
        )


def rule_exception_ground_truth(
    exception_rate: float,
    context_count: int,
    context_shift: float,
    context_blocks: Sequence[int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact (context frequencies, per-context exception rates).

    Context modulation is multiplicative with renormalization: raw
    multipliers are linearly spaced in [1 - shift, 1 + shift] across the
    contexts and rescaled so the frequency-weighted global rate equals
    ``exception_rate``. Contexts cycle deterministically; ``context_blocks``
    gives the per-context dwell lengths within one cycle (default 1 each).
    """
    c = int(context_count)
    if context_blocks is None:
        blocks = np.ones(c)
    else:
        blocks = np.asarray(context_blocks, dtype=float)
        if blocks.size != c or np.any(blocks < 1):
            raise UsageError("context_blocks must give a positive length per context")
    freqs = blocks / blocks.sum()
    if c == 1:
        raw = np.ones(1)
    else:
        lin = 2.0 * np.arange(c) / (c - 1) - 1.0
        raw = 1.0 + float(context_shift) * lin
    mean = float(freqs @ raw)
    rates = np.clip(exception_rate * raw / mean, 0.0, 1.0)
    return freqs, rates


def gen_rule_exception(
    base_symbol: int,
    exception_rate: float,
    context_count: int,
    context_shift: float,
    length: int,
    seed: int,
    alphabet: int = 2,
    context_blocks: Sequence[int] | None = None,
) -> SymbolStream:
    """Base-rule stream with context-modulated exceptions.

    Emits ``base_symbol`` except with per-step exception probability whose
    global mean is ``exception_rate`` and which is modulated across
    deterministically cycling contexts (see rule_exception_ground_truth).
    Exceptions are drawn uniformly from the non-base symbols.
    """
    if not 0.0 <= exception_rate <= 1.0:
        raise UsageError("exception_rate must lie in [0, 1]")
    if length < 1:
        raise UsageError("length must be >= 1")
    if alphabet < 2:
        raise UsageError("alphabet must be >= 2")
    if not 0 <= base_symbol < alphabet:
        raise UsageError("base_symbol outside alphabet")
    freqs, rates = rule_exception_ground_truth(
        exception_rate, context_count, context_shift, context_blocks
    )
    if context_blocks is None:
        pattern = np.arange(context_count, dtype=np.int64)
    else:
        pattern = np.concatenate(
            [np.full(int(b), i, dtype=np.int64) for i, b in enumerate(context_blocks)]
        )
    reps = length // pattern.size + 1
    contexts = np.tile(pattern, reps)[:length]

    rng = derive_rng(seed)
    is_exc = rng.random(length) < rates[contexts]
    symbols = np.full(length, base_symbol, dtype=np.int64)
    n_exc = int(is_exc.sum())
    if n_exc:
        offs = rng.integers(1, alphabet, size=n_exc)
        symbols[is_exc] = (base_symbol + offs) % alphabet
    return SymbolStream(
        symbols=symbols,
        alphabet=alphabet,
        contexts=contexts,
        metadata={
            "kind": "rule_exception",
            "seed": int(seed),
            "base_symbol": int(base_symbol),
            "context_freqs": freqs.tolist(),
            "context_rates": rates.tolist(),
        },
    )


def stationary_distribution(transition: Channel | np.ndarray) -> np.ndarray:
    """Stationary distribution of a row-stochastic matrix via its unit eigenvector."""
    p = transition.cond if isinstance(transition, Channel) else np.asarray(transition, float)
    vals, vecs = np.linalg.eig(p.T)
    idx = int(np.argmin(np.abs(vals - 1.0)))
    v = np.real(vecs[:, idx])
    v = np.abs(v)
    return v / v.sum()


def markov_entropy_rate(transition: Channel | np.ndarray) -> float:
    """Entropy rate of a stationary Markov chain, in bits per step."""
    p = transition.cond if isinstance(transition, Channel) else np.asarray(transition, float)
    pi = stationary_distribution(p)
    mask = p > 0.0
    row_h = np.zeros(p.shape[0])
    for i in range(p.shape[0]):
        r = p[i][mask[i]]
        row_h[i] = -(r * np.log2(r)).sum()
    return float(pi @ row_h)


def stationary_joint(transition: Channel | np.ndarray) -> JointTable:
    """Joint p(X_t, X_{t+1}) of the stationary chain (the lag-1 pair table)."""
    p = transition.cond if isinstance(transition, Channel) else np.asarray(transition, float)
    pi = stationary_distribution(p)
    return JointTable(pi[:, None] * p)


def confounded_lag1_correlation(
    hidden_transition: np.ndarray, emission: np.ndarray
) -> float:
    """Analytic lag-1 Pearson correlation of integer-coded observed symbols.

    The hidden chain drives consecutive emissions; the observed correlation
    flows entirely through the hidden state (the direct observed-to-observed
    effect is zero by construction).
    """
    t = np.asarray(hidden_transition, dtype=float)
    e = np.asarray(emission, dtype=float)
    pi = stationary_distribution(t)
    vals = np.arange(e.shape[1], dtype=float)
    m = e @ vals  # E[X | h]
    m2 = e @ vals**2
    mean = float(pi @ m)
    var = float(pi @ m2) - mean**2
    if var <= 0.0:
        return 0.0
    exy = float(np.einsum("h,hk,h,k->", pi, t, m, m))
    return (exy - mean**2) / var


def gen_markov(
    transition: Channel,
    length: int,
    seed: int,
    confounder: Channel | None = None,
) -> SymbolStream:
    """Markov stream, plain or hidden-confounded.

    Plain: a standard chain from a uniform start; ``contexts`` holds the
    previous symbol (the true parent of each emission). Confounded: the
    ``transition`` drives a hidden chain and ``confounder`` maps hidden state
    to the emission distribution; consecutive observations then correlate
    only through the hidden state. ``contexts`` holds the hidden states and
    the metadata records the exact kernels, the analytic lag-1 correlation
    of the observations and the (zero) direct observed-to-observed effect.
    """
    p = transition.cond
    if p.shape[0] != p.shape[1]:
        raise UsageError("transition must be square (state to state)")
    if length < 1:
        raise UsageError("length must be >= 1")
    n = p.shape[0]
    rng = derive_rng(seed)
    cum = np.cumsum(p, axis=1)
    # Sample the chain: one extra leading state serves as the first context.
    u = rng.random(length + 1)
    states = np.empty(length + 1, dtype=np.int64)
    states[0] = rng.integers(0, n)
    for t in range(1, length + 1):
        states[t] = np.searchsorted(cum[states[t - 1]], u[t])

    if confounder is None:
        return SymbolStream(
            symbols=states[1:],
            alphabet=n,
            contexts=states[:-1],
            metadata={
                "kind": "markov_plain",
                "seed": int(seed),
                "transition": p.tolist(),
                "stationary": stationary_distribution(p).tolist(),
                "entropy_rate_bits": markov_entropy_rate(p),
            },
        )

    e = confounder.cond
    if e.shape[0] != n:
        raise UsageError("confounder rows must match hidden state count")
    hidden = states[1:]
    cum_e = np.cumsum(e, axis=1)
    u2 = rng.random(length)
    symbols = np.empty(length, dtype=np.int64)
    for t in range(length):
        symbols[t] = np.searchsorted(cum_e[hidden[t]], u2[t])
    return SymbolStream(
        symbols=symbols,
        alphabet=e.shape[1],
        contexts=hidden,
        metadata={
            "kind": "markov_confounded",
            "seed": int(seed),
            "hidden_transition": p.tolist(),
            "emission": e.tolist(),
            "hidden_stationary": stationary_distribution(p).tolist(),
            "lag1_correlation": confounded_lag1_correlation(p, e),
            "direct_effect": 0.0,
        },
    )


def _corruption_matrix(size: int, noise: float) -> np.ndarray:
    """Symmetric channel: keep identity w.p. 1-noise, else uniform over others."""
    if size == 1:
        return np.ones((1, 1))
    m = np.full((size, size), noise / (size - 1))
    np.fill_diagonal(m, 1.0 - noise)
    return m


#: Geometric detail-digit weights, cycled over parent values. The digit is
#: drawn from an independently corrupted copy of the parent, so it leaks a
#: graded second view of the parent: leaves then spread over a rich
#: posterior spectrum and partial compression is genuinely lossy at every
#: level. A fully scrambled parent still severs everything below from Y.
_DIGIT_RATIO_PALETTE = (0.25, 4.0, 0.5, 2.0)


def _digit_matrix(parent_size: int, branch: int) -> np.ndarray:
    """Rows: detail-digit distribution appended under each parent value."""
    rows = np.empty((parent_size, branch))
    for v in range(parent_size):
        r = _DIGIT_RATIO_PALETTE[v % len(_DIGIT_RATIO_PALETTE)]
        w = r ** np.arange(branch)
        rows[v] = w / w.sum()
    return rows


def hierarchical_level_sizes(levels: int, branch_entropy: float) -> list[int]:
    b = round(2.0**branch_entropy)
    if b < 2:
        raise UsageError("branch_entropy must give a branch factor >= 2")
    return [b ** (l + 1) for l in range(levels)]


def gen_hierarchical(
    levels: int,
    branch_entropy: float,
    noise: float | Sequence[float],
    length: int,
    seed: int,
) -> tuple[SymbolStream, JointTable]:
    """Latent-cascade samples plus the exact joint p(x, y).

    A uniform top-level latent Y is expanded level by level: each expansion
    corrupts the parent identity with the level's noise probability
    (spread uniformly over the other parent values) and appends a fresh
    detail digit whose bias depends on the corrupted parent. The returned
    joint marginalizes the intermediate levels exactly, enabling exact
    per-layer analysis. The stream holds i.i.d. (x, y) draws with Y in
    ``contexts``.

    With binary branching, noise 0.5 at a level fully scrambles the parent
    identity there. Total |X| is capped at 4096 (CapacityError beyond).
    """
    if levels < 2:
        raise UsageError("levels must be >= 2")
    if length < 1:
        raise UsageError("length must be >= 1")
    sizes = hierarchical_level_sizes(levels, branch_entropy)
    if sizes[-1] > MAX_HIERARCHY_ALPHABET:
        raise CapacityError(
            f"observed alphabet {sizes[-1]} exceeds cap {MAX_HIERARCHY_ALPHABET}"
        )
    b = sizes[0]
    n_expansions = levels - 1
    if isinstance(noise, (int, float)):
        noises = [float(noise)] * n_expansions
    else:
        noises = [float(v) for v in noise]
        if len(noises) != n_expansions:
            raise UsageError(
                f"need {n_expansions} noise values (one per expansion), got {len(noises)}"
            )
    for v in noises:
        if not 0.0 <= v <= 1.0:
            raise UsageError(f"noise {v} outside [0, 1]")

    # Conditional of each expansion: child = (corrupted parent, digit),
    # where the digit's bias follows a second, independently corrupted copy
    # of the parent. Both corruptions share the level's noise.
    cond_y_to_x = np.eye(b)
    for l in range(n_expansions):
        parent_size = sizes[l]
        corrupt = _corruption_matrix(parent_size, noises[l])
        digit_mix = corrupt @ _digit_matrix(parent_size, b)
        expand = np.zeros((parent_size, parent_size * b))
        for v_prime in range(parent_size):
            expand[:, v_prime * b : (v_prime + 1) * b] = (
                corrupt[:, [v_prime]] * digit_mix
            )
        cond_y_to_x = cond_y_to_x @ expand

    py = np.full(b, 1.0 / b)
    joint_yx = py[:, None] * cond_y_to_x
    joint = JointTable(joint_yx.T)  # rows index X, columns index Y

    rng = derive_rng(seed)
    y = rng.integers(0, b, size=length)
    cum = np.cumsum(cond_y_to_x, axis=1)
    u = rng.random(length)
    x = np.empty(length, dtype=np.int64)
    for t in range(length):
        x[t] = np.searchsorted(cum[y[t]], u[t])
    stream = SymbolStream(
        symbols=x,
        alphabet=sizes[-1],
        contexts=y.astype(np.int64),
        metadata={
            "kind": "hierarchical",
            "seed": int(seed),
            "level_sizes": sizes,
            "noise": noises,
            "exact_ixy_bits": mutual_information(joint),
        },
    )
    return stream, joint


def generate(spec: EnvSpec) -> SymbolStream:
    """Dispatch an EnvSpec to its generator. Hierarchical specs attach the
    exact joint under ``stream.metadata['joint']``."""
    p = spec.params
    if spec.kind == "rule_exception":
        return gen_rule_exception(
            base_symbol=int(p.get("base_symbol", 0)),
            exception_rate=float(p["exception_rate"]),
            context_count=int(p["context_count"]),
            context_shift=float(p["context_shift"]),
            length=int(p["length"]),
            seed=spec.seed,
            alphabet=int(p.get("alphabet", 2)),
            context_blocks=p.get("context_blocks"),
        )
    if spec.kind == "markov_plain":
        return gen_markov(
            Channel(np.asarray(p["transition"], dtype=float)),
            length=int(p["length"]),
            seed=spec.seed,
        )
    if spec.kind == "markov_confounded":
        return gen_markov(
            Channel(np.asarray(p["transition"], dtype=float)),
            length=int(p["length"]),
            seed=spec.seed,
            confounder=Channel(np.asarray(p["emission"], dtype=float)),
        )
    stream, joint = gen_hierarchical(
        levels=int(p["levels"]),
        branch_entropy=float(p["branch_entropy"]),
        noise=p["noise"],
        length=int(p["length"]),
        seed=spec.seed,
    )
    stream.metadata["joint"] = joint
    return stream


@dataclass(frozen=True)
class GroundTruth:
    """Exact context frequencies and per-context emission law of an environment."""

    context_freq: np.ndarray
    emission: Channel

    def joint(self) -> JointTable:
        """Exact p(context, symbol)."""
        return self.emission.input_joint(self.context_freq)


def env_ground_truth(spec: EnvSpec) -> GroundTruth:
    """The exact (context frequency, context -> symbol) law behind a spec."""
    p = spec.params
    if spec.kind == "rule_exception":
        alphabet = int(p.get("alphabet", 2))
        base = int(p.get("base_symbol", 0))
        freqs, rates = rule_exception_ground_truth(
            float(p["exception_rate"]),
            int(p["context_count"]),
            float(p["context_shift"]),
            p.get("context_blocks"),
        )
        rows = np.zeros((len(rates), alphabet))
        for c, r in enumerate(rates):
            rows[c, :] = r / (alphabet - 1)
            rows[c, base] = 1.0 - r
        return GroundTruth(context_freq=freqs, emission=Channel(rows))
    if spec.kind == "markov_plain":
        t = np.asarray(p["transition"], dtype=float)
        return GroundTruth(
            context_freq=stationary_distribution(t), emission=Channel(t)
        )
    if spec.kind == "markov_confounded":
        t = np.asarray(p["transition"], dtype=float)
        e = np.asarray(p["emission"], dtype=float)
        return GroundTruth(
            context_freq=stationary_distribution(t), emission=Channel(e)
        )
    # hierarchical: context is the top latent, emission is p(x | y)
    sizes = hierarchical_level_sizes(int(p["levels"]), float(p["branch_entropy"]))
    _, joint = gen_hierarchical(
        levels=int(p["levels"]),
        branch_entropy=float(p["branch_entropy"]),
        noise=p["noise"],
        length=1,
        seed=spec.seed,
    )
    jy_x = joint.swap()  # rows Y, cols X
    return GroundTruth(
        context_freq=jy_x.marginal_x(),
        emission=Channel(jy_x.conditional_y_given_x()),
    )
