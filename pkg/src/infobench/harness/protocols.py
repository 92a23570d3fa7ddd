"""Seeded protocol runners and the falsification checker.

Four runners measure the falsifiable signatures on synthetic environments:

* b2: efficiency vs. out-of-distribution surprise across a model family
  (Spearman rank correlation with a seeded permutation p-value).
* b3: exception dynamics: growth exponent of cumulative exceptions and the
  efficiency-weighted exponential decay of the residual exception stock.
* b4: per-layer efficiency gradient of optimized encoder stacks.
* b5: operation-count proxy: energy per predictive bit across training.

Each trial derives its own seeds from (config seed, trial index, purpose
tag); trial rows and summary statistics are pure functions of the persisted
per-trial records, so an independent reader can recompute every reported
number (the ``verify`` subcommand does exactly that).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
from scipy import stats as sstats

from ..dynamics import classify_model_signature, fit_alpha_points, log_grid
from ..env_gen import EnvSpec, GroundTruth, SymbolStream, env_ground_truth, generate
from ..errors import InsufficientDataError, UsageError
from ..hierarchy import layer_efficiency, optimize_stack
from ..info_core import (
    Channel,
    JointTable,
    derive_rng,
    epistemic_entropy_rate,
    mutual_information,
)
from ..model_zoo import (
    CorrelationalModel,
    GenerativeModel,
    PredictiveModel,
    efficiency_functional,
    run_stream,
)
from .config import (
    TAG_ALPHA,
    TAG_ENV,
    TAG_OOD,
    TAG_PERM,
    TAG_STACK,
    ExperimentConfig,
    derive_seed,
)
from .report import ExperimentReport

VERDICT_SUPPORTS = "supports"
VERDICT_FALSIFIES = "falsifies"
VERDICT_INDETERMINATE = "indeterminate"

#: The four framework-level failure conditions, keyed by criterion number.
CRITERIA = {
    1: ("b2_efficiency_generalization",
        "higher compression efficiency must not predict worse OOD generalization"),
    2: ("b3_exception_decay",
        "residual exception stock must decay exponentially with the efficiency-weighted rate"),
    3: ("b4_hierarchy_gradient",
        "per-layer efficiency must increase with depth in optimized stacks"),
    4: ("b5_energy_proxy",
        "operation cost per predictive bit must trend down for the generative family"),
}

DETAIL_COLUMNS = {
    "b2_efficiency_generalization": (
        ("trial", int), ("setting_id", str), ("family", str),
        ("c_efficiency", float), ("ood_surprise", float),
    ),
    "b3_exception_decay": (
        ("trial", int), ("setting_id", str), ("series", str),
        ("t", int), ("value", float), ("s_cum", float),
    ),
    "b4_hierarchy_gradient": (
        ("trial", int), ("layer", int), ("rate_bits", float),
        ("relevance_bits", float), ("epsilon_ib", float),
    ),
    "b5_energy_proxy": (
        ("trial", int), ("setting_id", str), ("t", int),
        ("ops_per_step", float), ("rate_bits", float),
        ("xi", float), ("included", int),
    ),
}


# ---------------------------------------------------------------------------
# shared machinery


def trial_env(config: ExperimentConfig, trial: int) -> EnvSpec:
    seed = derive_seed(config.env.seed, config.seed, trial, TAG_ENV)
    return EnvSpec(kind=config.env.kind, params=config.env.params, seed=seed)


def build_model(setting: dict, alphabet: int, context_count: int) -> PredictiveModel:
    family = setting["family"]
    frozen = bool(setting.get("frozen", False))
    if family == "correlational":
        return CorrelationalModel(
            alphabet,
            context_count,
            confidence=float(setting.get("confidence", 0.99)),
            frozen=frozen,
        )
    return GenerativeModel(
        alphabet,
        context_count,
        prior=float(setting.get("prior", 0.5)),
        frozen=frozen,
    )


def resolve_contexts(
    view: str, symbols: np.ndarray, env_contexts: np.ndarray | None,
    env_kind: str, gt: GroundTruth,
) -> tuple[np.ndarray, int]:
    """Context sequence and context count a model sees under a view.

    "env" is the environment's true parent variable; "surface" is the
    observable correlate (the previous symbol on Markov streams); "merged"
    collapses everything into a single context.
    """
    if view == "merged":
        return np.zeros(symbols.size, dtype=np.int64), 1
    if view == "env":
        if env_contexts is None:
            raise UsageError("environment exposes no contexts for the 'env' view")
        return env_contexts, len(gt.context_freq)
    if view == "surface":
        if env_kind in ("markov_plain", "markov_confounded"):
            prev = np.empty(symbols.size, dtype=np.int64)
            if symbols.size:
                prev[0] = symbols[0]
                prev[1:] = symbols[:-1]
            return prev, int(gt.emission.out_size)
        if env_contexts is None:
            raise UsageError("environment exposes no contexts for the 'surface' view")
        return env_contexts, len(gt.context_freq)
    raise UsageError(f"unknown context view {view!r}")


def view_context_freq(view: str, gt: GroundTruth, env_kind: str) -> np.ndarray:
    """Exact frequency of the context variable a view conditions on."""
    if view == "merged":
        return np.ones(1)
    if view == "surface" and env_kind == "markov_confounded":
        return gt.context_freq @ gt.emission.cond
    return gt.context_freq


def shifted_ground_truth(gt: GroundTruth, mode: str) -> GroundTruth:
    """The OOD law: context frequencies with most/least frequent swapped,
    or (adversarial control) emissions replaced by pure label noise."""
    freq = gt.context_freq.copy()
    if mode == "context_swap":
        i, j = int(np.argmax(freq)), int(np.argmin(freq))
        freq[i], freq[j] = freq[j], freq[i]
        return GroundTruth(context_freq=freq, emission=gt.emission)
    if mode == "label_noise":
        k = gt.emission.out_size
        return GroundTruth(
            context_freq=freq, emission=Channel(np.full((len(freq), k), 1.0 / k))
        )
    raise UsageError(f"unknown ood_shift mode {mode!r}")


def sample_iid(gt: GroundTruth, length: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(symbols, contexts) drawn i.i.d. from a context-frequency x emission law."""
    rng = derive_rng(seed)
    cum_f = np.cumsum(gt.context_freq)
    ctx = np.searchsorted(cum_f, rng.random(length)).astype(np.int64)
    cum_e = np.cumsum(gt.emission.cond, axis=1)
    u = rng.random(length)
    sym = np.empty(length, dtype=np.int64)
    for t in range(length):
        sym[t] = np.searchsorted(cum_e[ctx[t]], u[t])
    return sym, ctx


def spearman_permutation(
    c: np.ndarray, g: np.ndarray, permutations: int, seed: int
) -> tuple[float | None, float | None, float | None]:
    """(rho, p_negative, p_positive) with seeded permutation p-values.

    Returns (None, None, None) when either variable has zero variance
    (ranks undefined up to ties everywhere).
    """
    if np.ptp(c) < 1e-15 or np.ptp(g) < 1e-15:
        return None, None, None
    rc = sstats.rankdata(c)
    rg = sstats.rankdata(g)
    def _corr(a, b):
        a = a - a.mean()
        b = b - b.mean()
        denom = math.sqrt(float((a * a).sum()) * float((b * b).sum()))
        return float((a * b).sum()) / denom if denom > 0 else 0.0
    rho = _corr(rc, rg)
    rng = derive_rng(seed)
    n_le = 0
    n_ge = 0
    for _ in range(permutations):
        perm = rng.permutation(rg)
        r = _corr(rc, perm)
        if r <= rho:
            n_le += 1
        if r >= rho:
            n_ge += 1
    p_neg = (1 + n_le) / (permutations + 1)
    p_pos = (1 + n_ge) / (permutations + 1)
    return rho, p_neg, p_pos


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot < 1e-30 and ss_res < 1e-30 else (
        0.0 if ss_tot < 1e-30 else 1.0 - ss_res / ss_tot
    )
    return float(slope), float(intercept), r2


def _pool_map(fn, n: int, workers: int):
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=min(workers, n)) as pool:
        return list(pool.map(fn, range(n)))


# ---------------------------------------------------------------------------
# b2: efficiency vs. OOD generalization


def _b2_trial(config: ExperimentConfig, trial: int) -> tuple[dict, list[tuple]]:
    env = trial_env(config, trial)
    gt = env_ground_truth(env)
    stream = generate(env)
    p = config.params
    ood_gt = shifted_ground_truth(gt, p["ood_shift"])
    ood_sym, ood_ctx = sample_iid(
        ood_gt, int(p["ood_length"]), derive_seed(config.seed, trial, TAG_OOD)
    )

    details = []
    cs, gs = [], []
    for setting in config.model_settings:
        view = setting.get("contexts", "env")
        ctx, n_ctx = resolve_contexts(
            view, stream.symbols, stream.contexts, env.kind, gt
        )
        model = build_model(setting, stream.alphabet, n_ctx)
        run_stream(model, stream.symbols, ctx)
        c_eff = efficiency_functional(model.ledger)
        ood_view_ctx, _ = resolve_contexts(view, ood_sym, ood_ctx, env.kind, gt)
        g = epistemic_entropy_rate(
            model.predictor_channel(), ood_sym, horizon=ood_sym.size,
            contexts=ood_view_ctx,
        )
        cs.append(c_eff)
        gs.append(g)
        details.append((trial, setting["id"], setting["family"], c_eff, g))

    row = b2_trial_stats(details, config, trial)
    return row, details


def b2_trial_stats(details: list[tuple], config: ExperimentConfig, trial: int) -> dict:
    """Trial-level statistics recomputable from the persisted detail rows."""
    if len(config.model_settings) < 4:
        raise InsufficientDataError(
            "rank correlation over fewer than 4 model settings is meaningless"
        )
    c = np.array([d[3] for d in details], dtype=float)
    g = np.array([d[4] for d in details], dtype=float)
    p = config.params
    rho, p_neg, p_pos = spearman_permutation(
        c, g, int(p["permutations"]), derive_seed(config.seed, trial, TAG_PERM)
    )
    if rho is None:
        verdict = VERDICT_INDETERMINATE
        zero_variance = True
    else:
        zero_variance = False
        if rho <= p["supports_rho"]:
            verdict = VERDICT_SUPPORTS
        elif rho >= p["falsify_rho"] and p_pos is not None and p_pos < p["falsify_p"]:
            verdict = VERDICT_FALSIFIES
        else:
            verdict = VERDICT_INDETERMINATE
    return {
        "trial": trial,
        "rho": rho,
        "p_neg": p_neg,
        "p_pos": p_pos,
        "verdict": verdict,
        "zero_variance": zero_variance,
    }


def b2_summary(trial_rows: list[dict], config: ExperimentConfig) -> dict:
    rhos = [r["rho"] for r in trial_rows if r["rho"] is not None]
    pnegs = [r["p_neg"] for r in trial_rows if r["p_neg"] is not None]
    votes = {v: sum(1 for r in trial_rows if r["verdict"] == v)
             for v in (VERDICT_SUPPORTS, VERDICT_FALSIFIES, VERDICT_INDETERMINATE)}
    return {
        "median_rho": float(np.median(rhos)) if rhos else None,
        "median_p_neg": float(np.median(pnegs)) if pnegs else None,
        "trial_votes": votes,
        "n_trials": len(trial_rows),
    }


def b2_falsification(trial_rows: list[dict], summary: dict, config: ExperimentConfig) -> dict:
    votes = summary["trial_votes"]
    majority = max(votes, key=lambda v: (votes[v], v == VERDICT_INDETERMINATE))
    dissent = sum(n for v, n in votes.items() if v != majority)
    return {
        "criterion": 1,
        "statement": CRITERIA[1][1],
        "verdict": majority,
        "trial_votes": votes,
        "dissent": dissent,
    }


# ---------------------------------------------------------------------------
# b3: exception decay and alpha signatures


def _b3_trial(config: ExperimentConfig, trial: int) -> tuple[dict, list[tuple]]:
    env = trial_env(config, trial)
    gt = env_ground_truth(env)
    stream = generate(env)
    p = config.params
    t_total = len(stream)

    details: list[tuple] = []
    per_family_series: dict[str, dict] = {}
    c_series_by_family: dict[str, np.ndarray] = {}
    extras: dict[str, dict] = {}

    for setting in config.model_settings:
        view = setting.get("contexts", "env")
        ctx, n_ctx = resolve_contexts(
            view, stream.symbols, stream.contexts, env.kind, gt
        )
        model = build_model(setting, stream.alphabet, n_ctx)
        run_stream(model, stream.symbols, ctx)
        led = model.ledger
        n_cum = led.n_cumulative()
        c_ser = led.c_series()
        s_cum = np.cumsum(c_ser)
        sid = setting["id"]
        c_series_by_family[sid] = c_ser

        t_lo = min(int(p["alpha_t_min"]), t_total)
        agrid = log_grid(t_lo, t_total, int(p["alpha_max_grid"]))
        for t in agrid:
            details.append((trial, sid, "alpha", int(t), float(n_cum[t - 1]),
                            float(s_cum[t - 1])))

        flags = led.exception_flags()
        nz = np.nonzero(flags)[0]
        last_crossing = int(nz[-1]) + 1 if nz.size else 0
        if last_crossing:
            dgrid = np.unique(
                np.linspace(1, last_crossing, int(p["decay_grid"])).astype(np.int64)
            )
            total = int(n_cum[-1])
            for t in dgrid:
                details.append((trial, sid, "decay", int(t),
                                float(total - n_cum[t - 1]), float(s_cum[t - 1])))

        cap = min(int(p["two_part_at"]), t_total)
        burn = min(int(p["burnin"]), t_total)
        extras[sid] = {
            "l_model_final": float(led.l_model_series()[-1]),
            "l_residual_final": float(led.l_residual_series()[-1]),
            "two_part_at_cap": float(
                led.l_model_series()[cap - 1] + led.l_residual_series()[cap - 1]
            ),
            "min_c_after_burnin": float(c_ser[burn - 1 :].min()),
            "final_c": float(c_ser[-1]),
        }
        per_family_series[sid] = {"family": setting["family"]}

    row = b3_trial_stats(details, config, trial)
    for sid, extra in extras.items():
        row["families"][sid].update(extra)

    fams = {s["family"]: s["id"] for s in config.model_settings}
    if "correlational" in fams and "generative" in fams:
        cg = c_series_by_family[fams["generative"]]
        cc = c_series_by_family[fams["correlational"]]
        burn = min(int(p["burnin"]), t_total)
        row["gen_dominates_from_burnin"] = bool(
            np.all(cg[burn - 1 :] > cc[burn - 1 :])
        )
        row["gen_two_part_smaller"] = bool(
            extras[fams["generative"]]["two_part_at_cap"]
            < extras[fams["correlational"]]["two_part_at_cap"]
        )
    return row, details


def b3_trial_stats(details: list[tuple], config: ExperimentConfig, trial: int) -> dict:
    """Alpha and decay fits recomputed from persisted series rows."""
    p = config.params
    families: dict[str, dict] = {}
    for fi, setting in enumerate(config.model_settings):
        sid = setting["id"]
        arow = [(d[3], d[4]) for d in details if d[1] == sid and d[2] == "alpha"]
        drow = [(d[4], d[5]) for d in details if d[1] == sid and d[2] == "decay"]
        stats: dict = {"family": setting["family"]}
        if arow:
            t = np.array([a[0] for a in arow], dtype=float)
            n = np.array([a[1] for a in arow], dtype=float)
            try:
                fit = fit_alpha_points(
                    t, n,
                    bootstrap_reps=int(p["alpha_bootstrap"]),
                    seed=derive_seed(config.seed, trial, TAG_ALPHA, fi),
                )
                stats.update(
                    alpha=fit.alpha, alpha_ci_low=fit.ci_low,
                    alpha_ci_high=fit.ci_high, alpha_r2=fit.r2,
                    alpha_offset_applied=fit.offset_applied,
                    signature=classify_model_signature(fit),
                )
            except InsufficientDataError:
                stats.update(
                    alpha=None, alpha_ci_low=None, alpha_ci_high=None,
                    alpha_r2=None, alpha_offset_applied=False,
                    signature="insufficient_data",
                )
        else:
            stats.update(
                alpha=None, alpha_ci_low=None, alpha_ci_high=None,
                alpha_r2=None, alpha_offset_applied=False,
                signature="insufficient_data",
            )

        n_total = int(arow[-1][1]) if arow else 0
        pos = [(s, r) for r, s in drow if r > 0]
        if not drow:
            stats.update(decay_slope=None, decay_r2=None,
                         decay_points=0, decay_status="no_exceptions")
        elif n_total < 10 or len(pos) < int(p["decay_min_points"]):
            # Mirrors the alpha fit's >= 10 rule: a handful of startup
            # revisions is not an exception trajectory.
            stats.update(decay_slope=None, decay_r2=None,
                         decay_points=len(pos), decay_status="skipped_insufficient")
        else:
            x = np.array([s for s, _ in pos])
            y = np.log(np.array([r for _, r in pos]))
            if np.ptp(x) < 1e-9:
                # All residual mass decayed before any efficiency accrued;
                # there is no exponential-in-S curve to fit.
                stats.update(decay_slope=None, decay_r2=None,
                             decay_points=len(pos), decay_status="skipped_degenerate")
            else:
                slope, _, r2 = _ols(x, y)
                status = "fitted" if slope < 0 else "non_decaying"
                stats.update(decay_slope=slope, decay_r2=r2,
                             decay_points=len(pos), decay_status=status)
        stats["n_total"] = n_total
        families[sid] = stats
    return {"trial": trial, "families": families}


def b3_summary(trial_rows: list[dict], config: ExperimentConfig) -> dict:
    out: dict = {"n_trials": len(trial_rows), "families": {}}
    for setting in config.model_settings:
        sid = setting["id"]
        alphas = [r["families"][sid]["alpha"] for r in trial_rows
                  if r["families"][sid]["alpha"] is not None]
        sigs: dict[str, int] = {}
        for r in trial_rows:
            s = r["families"][sid]["signature"]
            sigs[s] = sigs.get(s, 0) + 1
        fitted = [r["families"][sid] for r in trial_rows
                  if r["families"][sid]["decay_status"] in ("fitted", "non_decaying")]
        low_r2 = sum(1 for f in fitted if f["decay_r2"] is not None
                     and f["decay_r2"] < config.params["decay_r2_floor"])
        out["families"][sid] = {
            "family": setting["family"],
            "median_alpha": float(np.median(alphas)) if alphas else None,
            "signature_counts": sigs,
            "decay_fitted": len(fitted),
            "decay_low_r2": low_r2,
            "median_min_c": float(np.median(
                [r["families"][sid].get("min_c_after_burnin") for r in trial_rows]
            )) if trial_rows and "min_c_after_burnin" in trial_rows[0]["families"][sid] else None,
        }
    dom = [r.get("gen_dominates_from_burnin") for r in trial_rows]
    two = [r.get("gen_two_part_smaller") for r in trial_rows]
    out["gen_dominates_count"] = sum(1 for d in dom if d)
    out["gen_two_part_smaller_count"] = sum(1 for d in two if d)
    return out


def b3_falsification(trial_rows: list[dict], summary: dict, config: ExperimentConfig) -> dict:
    """Criterion 2: generative residual decay must track the efficiency-weighted
    exponential; systematic deviation = low-r2 fits in >= the falsify fraction."""
    gen_ids = [s["id"] for s in config.model_settings if s["family"] == "generative"]
    fitted = 0
    low_r2 = 0
    for sid in gen_ids:
        fam = summary["families"][sid]
        fitted += fam["decay_fitted"]
        low_r2 += fam["decay_low_r2"]
    if fitted == 0:
        verdict = VERDICT_INDETERMINATE
    elif low_r2 / fitted >= config.params["falsify_fraction"]:
        verdict = VERDICT_FALSIFIES
    else:
        verdict = VERDICT_SUPPORTS
    return {
        "criterion": 2,
        "statement": CRITERIA[2][1],
        "verdict": verdict,
        "generative_fits": fitted,
        "generative_low_r2": low_r2,
    }


# ---------------------------------------------------------------------------
# b4: hierarchical efficiency gradient


def _b4_trial(config: ExperimentConfig, trial: int) -> tuple[dict, list[tuple]]:
    env = trial_env(config, trial)
    stream = generate(env)
    joint: JointTable = stream.metadata["joint"]
    p = config.params
    stack = optimize_stack(
        joint,
        p["layer_sizes"],
        p["beta_per_layer"],
        seed=derive_seed(config.seed, trial, TAG_STACK),
        restarts=int(p["restarts"]),
    )
    details = []
    for l in range(stack.depth):
        rate = mutual_information(stack.layer_pair_joint(l))
        rel = mutual_information(stack.representation_joint(l + 1))
        details.append((trial, l, rate, rel, layer_efficiency(stack, l)))
    return b4_trial_stats(details, config, trial), details


def b4_trial_stats(details: list[tuple], config: ExperimentConfig, trial: int) -> dict:
    eps = [d[4] for d in sorted(details, key=lambda d: d[1])]
    vacuous = len(eps) < 2
    strict = all(eps[i + 1] > eps[i] for i in range(len(eps) - 1))
    nondec = all(eps[i + 1] >= eps[i] - 1e-12 for i in range(len(eps) - 1))
    return {
        "trial": trial,
        "epsilons": eps,
        "strictly_increasing": strict,
        "nondecreasing": nondec,
        "vacuous": vacuous,
    }


def b4_summary(trial_rows: list[dict], config: ExperimentConfig) -> dict:
    n = len(trial_rows)
    strict = sum(1 for r in trial_rows if r["strictly_increasing"])
    nondec = sum(1 for r in trial_rows if r["nondecreasing"])
    vac = sum(1 for r in trial_rows if r["vacuous"])
    return {
        "n_trials": n,
        "strict_rate": strict / n if n else None,
        "nondecreasing_rate": nondec / n if n else None,
        "vacuous_trials": vac,
    }


def b4_falsification(trial_rows: list[dict], summary: dict, config: ExperimentConfig) -> dict:
    n = summary["n_trials"]
    if n == 0 or summary["vacuous_trials"] == n:
        verdict = VERDICT_INDETERMINATE
    elif summary["strict_rate"] < config.params["falsify_rate"]:
        verdict = VERDICT_FALSIFIES
    else:
        verdict = VERDICT_SUPPORTS
    return {
        "criterion": 3,
        "statement": CRITERIA[3][1],
        "verdict": verdict,
        "strict_rate": summary["strict_rate"],
        "vacuous_trials": summary["vacuous_trials"],
    }


# ---------------------------------------------------------------------------
# b5: operation-count energy proxy


def _b5_trial(config: ExperimentConfig, trial: int) -> tuple[dict, list[tuple]]:
    env = trial_env(config, trial)
    gt = env_ground_truth(env)
    stream = generate(env)
    p = config.params
    t_total = len(stream)
    t_min = min(int(p["checkpoint_t_min"]), t_total)
    checkpoints = log_grid(t_min, t_total, int(p["n_checkpoints"]))

    details: list[tuple] = []
    saturated: dict[str, bool] = {}
    for setting in config.model_settings:
        view = setting.get("contexts", "env")
        ctx, n_ctx = resolve_contexts(
            view, stream.symbols, stream.contexts, env.kind, gt
        )
        model = build_model(setting, stream.alphabet, n_ctx)
        freq = view_context_freq(view, gt, env.kind)
        sid = setting["id"]

        def snapshot(t: int, m: PredictiveModel, sid=sid, freq=freq) -> None:
            ops_per_step = m.ops.value / t
            joint = JointTable(freq[:, None] * m.predictor_channel().cond)
            rate = mutual_information(joint)
            included = rate >= 1e-12
            xi = ops_per_step / rate if included else math.nan
            details.append((trial, sid, t, ops_per_step, rate,
                            xi if included else float("nan"), int(included)))

        run_stream(model, stream.symbols, ctx,
                   checkpoint_steps=checkpoints.tolist(), on_checkpoint=snapshot)
        saturated[sid] = model.ops.saturated

    row = b5_trial_stats(details, config, trial)
    for sid, sat in saturated.items():
        row["families"][sid]["ops_saturated"] = sat
    return row, details


def b5_trial_stats(details: list[tuple], config: ExperimentConfig, trial: int) -> dict:
    p = config.params
    families: dict[str, dict] = {}
    for setting in config.model_settings:
        sid = setting["id"]
        rows = [d for d in details if d[1] == sid]
        usable = [d for d in rows if d[6] == 1 and d[2] >= int(p["burn_in"])]
        excluded = len(rows) - len(usable)
        if len(usable) < 3:
            families[sid] = {
                "family": setting["family"], "theil_slope": None,
                "n_included": len(usable), "n_excluded": excluded,
                "trend_negative": None,
            }
            continue
        t = np.array([d[2] for d in usable], dtype=float)
        xi = np.array([d[5] for d in usable], dtype=float)
        slope = float(sstats.theilslopes(xi, t)[0])
        families[sid] = {
            "family": setting["family"],
            "theil_slope": slope,
            "n_included": len(usable),
            "n_excluded": excluded,
            "trend_negative": bool(slope < 0),
        }
    return {"trial": trial, "families": families}


def b5_summary(trial_rows: list[dict], config: ExperimentConfig) -> dict:
    out: dict = {"n_trials": len(trial_rows), "families": {}}
    for setting in config.model_settings:
        sid = setting["id"]
        slopes = [r["families"][sid]["theil_slope"] for r in trial_rows
                  if r["families"][sid]["theil_slope"] is not None]
        neg = sum(1 for r in trial_rows if r["families"][sid]["trend_negative"])
        valid = sum(1 for r in trial_rows
                    if r["families"][sid]["trend_negative"] is not None)
        out["families"][sid] = {
            "family": setting["family"],
            "median_slope": float(np.median(slopes)) if slopes else None,
            "negative_trend": neg,
            "valid_trials": valid,
        }
    return out


def b5_falsification(trial_rows: list[dict], summary: dict, config: ExperimentConfig) -> dict:
    gen_ids = [s["id"] for s in config.model_settings if s["family"] == "generative"]
    neg = sum(summary["families"][sid]["negative_trend"] for sid in gen_ids)
    valid = sum(summary["families"][sid]["valid_trials"] for sid in gen_ids)
    if valid == 0:
        verdict = VERDICT_INDETERMINATE
    else:
        frac = neg / valid
        if frac >= config.params["supports_fraction"]:
            verdict = VERDICT_SUPPORTS
        elif frac < config.params["falsify_fraction"]:
            verdict = VERDICT_FALSIFIES
        else:
            verdict = VERDICT_INDETERMINATE
    return {
        "criterion": 4,
        "statement": CRITERIA[4][1],
        "verdict": verdict,
        "negative_trend": neg,
        "valid_trials": valid,
    }


# ---------------------------------------------------------------------------
# dispatch

_IMPL = {
    "b2_efficiency_generalization": (_b2_trial, b2_trial_stats, b2_summary, b2_falsification),
    "b3_exception_decay": (_b3_trial, b3_trial_stats, b3_summary, b3_falsification),
    "b4_hierarchy_gradient": (_b4_trial, b4_trial_stats, b4_summary, b4_falsification),
    "b5_energy_proxy": (_b5_trial, b5_trial_stats, b5_summary, b5_falsification),
}


def run_protocol(config: ExperimentConfig) -> ExperimentReport:
    """Run every trial of a configured protocol and assemble its report."""
    run_trial, _, summarize, falsify = _IMPL[config.protocol]
    workers = int(config.params.get("workers", 1))
    results = _pool_map(lambda i: run_trial(config, i), config.trials, workers)
    trial_rows = [r[0] for r in results]
    details = [r[1] for r in results]
    summary = summarize(trial_rows, config)
    falsification = falsify(trial_rows, summary, config)
    return ExperimentReport(
        protocol=config.protocol,
        per_trial=trial_rows,
        summary=summary,
        falsification=falsification,
        config=config,
        details=details,
    )


def run_b2(config: ExperimentConfig) -> ExperimentReport:
    """Efficiency vs. OOD-surprise coupling (criterion 1)."""
    if config.protocol != "b2_efficiency_generalization":
        raise UsageError("config protocol mismatch")
    return run_protocol(config)


def run_b3(config: ExperimentConfig) -> ExperimentReport:
    """Exception decay and growth-exponent signatures (criterion 2)."""
    if config.protocol != "b3_exception_decay":
        raise UsageError("config protocol mismatch")
    return run_protocol(config)


def run_b4(config: ExperimentConfig) -> ExperimentReport:
    """Hierarchical efficiency gradient (criterion 3)."""
    if config.protocol != "b4_hierarchy_gradient":
        raise UsageError("config protocol mismatch")
    return run_protocol(config)


def run_b5(config: ExperimentConfig) -> ExperimentReport:
    """Operation-count energy proxy (criterion 4)."""
    if config.protocol != "b5_energy_proxy":
        raise UsageError("config protocol mismatch")
    return run_protocol(config)


def falsification_summary(reports: list[ExperimentReport]) -> list[dict]:
    """Four-row verdict table over criteria 1-4 from any set of reports.

    Criteria without a matching report come back indeterminate; criteria
    with several reports take the majority verdict with a dissent count.
    """
    if not reports:
        raise UsageError("need at least one report")
    rows = []
    for criterion, (protocol, statement) in sorted(CRITERIA.items()):
        matching = [r for r in reports if r.protocol == protocol]
        if not matching:
            rows.append({
                "criterion": criterion,
                "statement": statement,
                "verdict": VERDICT_INDETERMINATE,
                "evidence": [],
                "dissent": 0,
            })
            continue
        verdicts = [m.falsification["verdict"] for m in matching]
        counts = {v: verdicts.count(v) for v in set(verdicts)}
        majority = max(
            counts,
            key=lambda v: (counts[v],
                           v == VERDICT_INDETERMINATE),  # ties break conservative
        )
        rows.append({
            "criterion": criterion,
            "statement": statement,
            "verdict": majority,
            "evidence": [m.provenance()["config_hash"] for m in matching],
            "dissent": sum(n for v, n in counts.items() if v != majority),
        })
    return rows


def format_falsification_table(rows: list[dict]) -> str:
    lines = ["criterion  verdict        dissent  statement"]
    for r in rows:
        lines.append(
            f"{r['criterion']:<10d} {r['verdict']:<14s} {r['dissent']:<8d} {r['statement']}"
        )
    return "\n".join(lines)
