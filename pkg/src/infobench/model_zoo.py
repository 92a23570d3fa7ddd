"""Online model families with explicit two-part description-length accounting.

Two families are implemented over discrete symbol streams with contexts:

* correlational: a per-context majority rule with fixed confidence plus an
  explicit store of exception instances. Its predictive distribution never
  adapts; every stored exception costs log2(t) + log2(alphabet) bits
  (position + symbol), so the model part of the code grows with the cases
  it memorizes.
* generative: a parametric per-context emission model (structure = the
  context partition, theta = smoothed emission probabilities). Structure
  cost is constant, parameters cost (k/2) * log2(t) bits at the standard
  1/sqrt(t) two-part precision, and nothing is ever stored per instance.

Both accumulate residual cost as the prequential surprise -log2 p(obs |
context) under the pre-update model, so the ledger's residual equals the
sum of per-step surprises exactly.

Exception events:

* correlational: an observation whose raw surprise exceeds
  max(mean + m * std of the trailing surprise window, floor) is stored.
* generative: an observation is counted (never stored) when the parameter
  update it forces carries more than a threshold of information
  (KL(posterior || prior) in bits). Once the rates are learned, further
  draws of a rare symbol move the model by O(1/t^2) and stop registering,
  which is what makes the family's exception growth flatten.

Updates are strictly sequential per stream; independent (model, stream)
runs parallelize freely.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import UsageError
from .ib_solver import epsilon_ib
from .info_core import Channel, JointTable

LOG2 = math.log2

#: Trailing-window length for the correlational exception threshold.
DEFAULT_WINDOW = 500
DEFAULT_SIGMA_MULTIPLIER = 1.0
#: Minimum surprise (bits) below which nothing is ever stored as an exception.
DEFAULT_FLOOR_BITS = 1.0
#: Boundary tolerance so a surprise exactly at the threshold still registers.
THRESHOLD_SLACK = 1e-9
#: Information-gain threshold (bits) for generative exception counting.
DEFAULT_GAIN_THRESHOLD = 0.01
#: Constant structural cost of the generative family (choice among a small
#: candidate set of context partitions).
DEFAULT_STRUCTURE_BITS = 3.0

OPS_SATURATION = 2**62

EFFICIENCY_MODES = ("explained_ratio", "mdl_ratio", "ib_of_predictor")


class OpsCounter:
    """Elementary-operation counter that saturates instead of overflowing."""

    __slots__ = ("value", "saturated")

    def __init__(self) -> None:
        self.value = 0
        self.saturated = False

    def add(self, n: int) -> None:
        if self.value >= OPS_SATURATION - n:
            self.value = OPS_SATURATION
            self.saturated = True
        else:
            self.value += n


@dataclass(frozen=True)
class StepRecord:
    """Per-step accounting emitted by a model update."""

    t: int
    surprise_bits: float
    exception: bool
    stored: bool
    gain_bits: float
    l_model: float
    l_residual: float
    n_exceptions: int


class ModelLedger:
    """Running two-part code of a model: L(M), L(X|M), n(t) and C(M_t).

    The per-step history (t, l_model, l_residual, n_exceptions,
    c_efficiency) is derivable on demand; the recorded efficiency is the
    explained-ratio functional clamped to [0, 1].
    """

    def __init__(self, alphabet: int) -> None:
        if alphabet < 1:
            raise UsageError("alphabet must be >= 1")
        self.alphabet = int(alphabet)
        self._surprise: list[float] = []
        self._exception: list[bool] = []
        self._l_model: list[float] = []
        self._ops: list[int] = []
        self.l_residual = 0.0
        self.n_exceptions = 0

    @property
    def t(self) -> int:
        return len(self._surprise)

    @property
    def l_model(self) -> float:
        return self._l_model[-1] if self._l_model else 0.0

    def append(
        self, surprise: float, exception: bool, l_model: float, ops: int
    ) -> None:
        self._surprise.append(surprise)
        self._exception.append(exception)
        self._l_model.append(l_model)
        self._ops.append(ops)
        self.l_residual += surprise
        if exception:
            self.n_exceptions += 1

    def surprise_series(self) -> np.ndarray:
        return np.asarray(self._surprise, dtype=float)

    def l_residual_series(self) -> np.ndarray:
        return np.cumsum(self.surprise_series())

    def l_model_series(self) -> np.ndarray:
        return np.asarray(self._l_model, dtype=float)

    def n_cumulative(self) -> np.ndarray:
        return np.cumsum(np.asarray(self._exception, dtype=np.int64))

    def ops_cumulative(self) -> np.ndarray:
        return np.cumsum(np.asarray(self._ops, dtype=np.int64))

    def exception_flags(self) -> np.ndarray:
        return np.asarray(self._exception, dtype=bool)

    def c_series(self) -> np.ndarray:
        """C(M_t) = 1 - (residual bits per step) / log2(alphabet), clamped to [0, 1]."""
        t = self.t
        if t == 0:
            return np.empty(0)
        if self.alphabet == 1:
            return np.ones(t)
        steps = np.arange(1, t + 1, dtype=float)
        h_model = self.l_residual_series() / steps
        return np.clip(1.0 - h_model / LOG2(self.alphabet), 0.0, 1.0)

    def history(
        self, checkpoints: Sequence[int] | None = None
    ) -> list[tuple[int, float, float, int, float]]:
        """Rows (t, l_model, l_residual, n_exceptions, c_efficiency)."""
        if self.t == 0:
            return []
        res = self.l_residual_series()
        ncum = self.n_cumulative()
        c = self.c_series()
        lm = self.l_model_series()
        ts = range(1, self.t + 1) if checkpoints is None else checkpoints
        out = []
        for t in ts:
            if not 1 <= t <= self.t:
                raise UsageError(f"checkpoint {t} outside 1..{self.t}")
            i = t - 1
            out.append((int(t), float(lm[i]), float(res[i]), int(ncum[i]), float(c[i])))
        return out

    def to_csv(self, checkpoints: Sequence[int] | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "l_model_bits", "l_residual_bits", "n_exceptions", "c_efficiency"])
        for t, lm, lr, n, c in self.history(checkpoints):
            w.writerow([t, repr(lm), repr(lr), n, repr(c)])
        return buf.getvalue()


class _TrailingStats:
    """Mean and population std of the last ``window`` pushed values."""

    __slots__ = ("window", "_buf", "_head", "_count", "_sum", "_sum2")

    def __init__(self, window: int) -> None:
        if window < 1:
            raise UsageError("window must be >= 1")
        self.window = window
        self._buf = [0.0] * window
        self._head = 0
        self._count = 0
        self._sum = 0.0
        self._sum2 = 0.0

    def push(self, x: float) -> None:
        if self._count == self.window:
            old = self._buf[self._head]
            self._sum -= old
            self._sum2 -= old * old
        else:
            self._count += 1
        self._buf[self._head] = x
        self._sum += x
        self._sum2 += x * x
        self._head = (self._head + 1) % self.window

    @property
    def count(self) -> int:
        return self._count

    def mean_std(self) -> tuple[float, float]:
        if self._count == 0:
            return 0.0, 0.0
        mean = self._sum / self._count
        var = max(self._sum2 / self._count - mean * mean, 0.0)
        return mean, math.sqrt(var)


class PredictiveModel:
    """Shared surface of the online families: predict, update, ledger, channel view."""

    family = "abstract"

    def __init__(self, alphabet: int, context_count: int, frozen: bool = False) -> None:
        if alphabet < 2:
            raise UsageError("alphabet must be >= 2")
        if context_count < 1:
            raise UsageError("context_count must be >= 1")
        self.alphabet = int(alphabet)
        self.context_count = int(context_count)
        self.frozen = bool(frozen)
        self.ledger = ModelLedger(alphabet)
        self.ops = OpsCounter()

    def predict_row(self, context: int) -> list[float]:
        raise NotImplementedError

    def update(self, observation: int, context: int) -> StepRecord:
        raise NotImplementedError

    def _check_step(self, observation: int, context: int) -> None:
        if not 0 <= observation < self.alphabet:
            raise UsageError(f"observation {observation} outside alphabet {self.alphabet}")
        if not 0 <= context < self.context_count:
            raise UsageError(f"context {context} outside 0..{self.context_count - 1}")

    def predictor_channel(self) -> Channel:
        """Current context -> next-symbol distribution as a Channel."""
        rows = [self.predict_row(c) for c in range(self.context_count)]
        return Channel(np.asarray(rows, dtype=float))

    def _record(
        self, surprise: float, exception: bool, stored: bool, gain: float,
        l_model: float, ops: int,
    ) -> StepRecord:
        self.ops.add(ops)
        self.ledger.append(surprise, exception, l_model, ops)
        return StepRecord(
            t=self.ledger.t,
            surprise_bits=surprise,
            exception=exception,
            stored=stored,
            gain_bits=gain,
            l_model=l_model,
            l_residual=self.ledger.l_residual,
            n_exceptions=self.ledger.n_exceptions,
        )


class CorrelationalModel(PredictiveModel):
    """Majority base rule per context, fixed confidence, explicit exception store.

    The rule sharpens only by swapping the majority symbol; probabilities are
    rigid, so the model pays for every rare case forever and stores it. The
    stored list is what the model "knows" beyond its rule: pure lookup
    semantics with no generalization.
    """

    family = "correlational"

    def __init__(
        self,
        alphabet: int,
        context_count: int,
        confidence: float = 0.99,
        window: int = DEFAULT_WINDOW,
        sigma_multiplier: float = DEFAULT_SIGMA_MULTIPLIER,
        floor_bits: float = DEFAULT_FLOOR_BITS,
        frozen: bool = False,
    ) -> None:
        super().__init__(alphabet, context_count, frozen)
        if not 1.0 / alphabet < confidence < 1.0:
            raise UsageError("confidence must lie in (1/alphabet, 1)")
        self.confidence = float(confidence)
        self.sigma_multiplier = float(sigma_multiplier)
        self.floor_bits = float(floor_bits)
        self._stats = _TrailingStats(window)
        self._counts = [[0] * alphabet for _ in range(context_count)]
        self._majority: list[int | None] = [None] * context_count
        self.exception_store: list[tuple[int, int]] = []
        self._l_exceptions = 0.0
        self._l_base = LOG2(alphabet) * (1 + context_count)

    def predict_row(self, context: int) -> list[float]:
        m = self._majority[context]
        k = self.alphabet
        if m is None:
            return [1.0 / k] * k
        off = (1.0 - self.confidence) / (k - 1)
        row = [off] * k
        row[m] = self.confidence
        return row

    def _prob(self, observation: int, context: int) -> float:
        m = self._majority[context]
        if m is None:
            return 1.0 / self.alphabet
        if observation == m:
            return self.confidence
        return (1.0 - self.confidence) / (self.alphabet - 1)

    def update(self, observation: int, context: int) -> StepRecord:
        self._check_step(observation, context)
        t = self.ledger.t + 1
        p = self._prob(observation, context)
        s = -LOG2(p)

        stored = False
        if not self.frozen and self._majority[context] is not None:
            if self._stats.count:
                mean, std = self._stats.mean_std()
                thr = max(mean + self.sigma_multiplier * std, self.floor_bits)
            else:
                thr = self.floor_bits
            if s > thr - THRESHOLD_SLACK:
                stored = True
                self.exception_store.append((t, observation))
                self._l_exceptions += LOG2(t) + LOG2(self.alphabet)

        ops = self.alphabet + 2
        if not self.frozen:
            self._stats.push(s)
            counts = self._counts[context]
            counts[observation] += 1
            m = self._majority[context]
            if m is None or counts[observation] > counts[m]:
                self._majority[context] = observation
            if stored:
                ops += 2
        else:
            ops = self.alphabet

        l_model = self._l_base + self._l_exceptions
        return self._record(s, stored, stored, 0.0, l_model, ops)


class GenerativeModel(PredictiveModel):
    """Per-context smoothed emission model with constant structural cost.

    theta is a Krichevsky-Trofimov style smoothed multinomial per context
    (pseudo-count ``prior`` per symbol). Nothing is ever stored per
    instance; an exception is a parameter revision that carries more than
    ``gain_threshold_bits`` of information.
    """

    family = "generative"

    def __init__(
        self,
        alphabet: int,
        context_count: int,
        prior: float = 0.5,
        structure_bits: float = DEFAULT_STRUCTURE_BITS,
        gain_threshold_bits: float = DEFAULT_GAIN_THRESHOLD,
        frozen: bool = False,
    ) -> None:
        super().__init__(alphabet, context_count, frozen)
        if prior <= 0:
            raise UsageError("prior must be positive")
        self.prior = float(prior)
        self.structure_bits = float(structure_bits)
        self.gain_threshold_bits = float(gain_threshold_bits)
        self._counts = [[prior] * alphabet for _ in range(context_count)]
        self._totals = [prior * alphabet] * context_count
        self.k_free = context_count * (alphabet - 1)

    def predict_row(self, context: int) -> list[float]:
        total = self._totals[context]
        return [c / total for c in self._counts[context]]

    def update(self, observation: int, context: int) -> StepRecord:
        self._check_step(observation, context)
        t = self.ledger.t + 1
        co = self._counts[context][observation]
        n = self._totals[context]
        p = co / n
        s = -LOG2(p)

        gain = 0.0
        exception = False
        if not self.frozen:
            # KL(posterior || prior) of the count update, in bits.
            p_new = (co + 1.0) / (n + 1.0)
            gain = p_new * LOG2((co + 1.0) * n / (co * (n + 1.0))) + (
                1.0 - p_new
            ) * LOG2(n / (n + 1.0))
            exception = gain > self.gain_threshold_bits
            self._counts[context][observation] = co + 1.0
            self._totals[context] = n + 1.0
            # Prediction + counter increment, plus a full-row revision only
            # when the update materially moves the model. Revision work
            # vanishes as structure is learned, so energy per step falls.
            ops = self.alphabet + 1 + (self.alphabet if exception else 0)
        else:
            ops = self.alphabet

        l_model = self.structure_bits + 0.5 * self.k_free * LOG2(max(t, 1))
        return self._record(s, exception, False, gain, l_model, ops)


def corr_model_update(
    model: CorrelationalModel, observation: int, context: int
) -> tuple[CorrelationalModel, StepRecord]:
    """One online step of the correlational family; returns (model, record)."""
    return model, model.update(observation, context)


def gen_model_update(
    model: GenerativeModel, observation: int, context: int
) -> tuple[GenerativeModel, StepRecord]:
    """One online step of the generative family; returns (model, record)."""
    return model, model.update(observation, context)


def run_stream(
    model: PredictiveModel,
    symbols: Sequence[int] | np.ndarray,
    contexts: Sequence[int] | np.ndarray | None = None,
    checkpoint_steps: Sequence[int] | None = None,
    on_checkpoint: Callable[[int, PredictiveModel], None] | None = None,
) -> ModelLedger:
    """Feed a whole stream through a model, optionally snapshotting at steps.

    ``checkpoint_steps`` must be sorted ascending 1-based step indices;
    ``on_checkpoint(t, model)`` fires after the update at each of them.
    """
    if hasattr(symbols, "symbols"):
        stream = symbols
        if contexts is None:
            contexts = getattr(stream, "contexts", None)
        symbols = stream.symbols
    sym = np.asarray(symbols, dtype=np.int64)
    if contexts is None:
        ctx = np.zeros(sym.size, dtype=np.int64)
    else:
        ctx = np.asarray(contexts, dtype=np.int64)
        if ctx.shape != sym.shape:
            raise UsageError("contexts must align 1:1 with symbols")
    cp = list(checkpoint_steps) if checkpoint_steps is not None else []
    ci = 0
    update = model.update
    for i in range(sym.size):
        update(int(sym[i]), int(ctx[i]))
        if ci < len(cp) and (i + 1) == cp[ci]:
            if on_checkpoint is not None:
                on_checkpoint(i + 1, model)
            ci += 1
    return model.ledger


def efficiency_functional(
    ledger: ModelLedger,
    mode: str = "explained_ratio",
    predictor: Channel | None = None,
    env_joint: JointTable | None = None,
) -> float:
    """The model-efficiency functional C(M_t) in one of three orientations.

    * explained_ratio (default, used by the dynamics): C = 1 - h_model/h_raw
      with h_model the residual bits per step and h_raw = log2(alphabet),
      clamped to [0, 1]. A zero-entropy environment (alphabet 1) gives 1.
    * mdl_ratio: l_model / l_residual, the model-to-residual code ratio in
      the operational-variables orientation. Reported for comparison only;
      not clamped and not used in the decay dynamics.
    * ib_of_predictor: bottleneck efficiency of the model's induced encoder
      (its context -> prediction channel) against the environment's exact
      (context, symbol) joint; requires ``predictor`` and ``env_joint``.
    """
    if mode not in EFFICIENCY_MODES:
        raise UsageError(f"mode must be one of {EFFICIENCY_MODES}, got {mode!r}")
    if ledger.t < 1:
        raise UsageError("ledger has no steps")
    if mode == "explained_ratio":
        if ledger.alphabet == 1:
            return 1.0
        h_model = ledger.l_residual / ledger.t
        return float(np.clip(1.0 - h_model / LOG2(ledger.alphabet), 0.0, 1.0))
    if mode == "mdl_ratio":
        if ledger.l_residual <= 0.0:
            return math.inf
        return ledger.l_model / ledger.l_residual
    if predictor is None or env_joint is None:
        raise UsageError("ib_of_predictor needs predictor and env_joint")
    return epsilon_ib(predictor, env_joint)
