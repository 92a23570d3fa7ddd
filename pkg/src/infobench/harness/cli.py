"""Command-line interface.

Subcommands:
  gen-env       sample a synthetic environment to a stream text file
  ib-frontier   sweep the bottleneck frontier of a joint table to CSV
  run           execute a protocol (b2|b3|b4|b5) and persist its report
  falsify       aggregate reports into the four-criterion verdict table
  verify        recompute a report's statistics from its persisted records
  export-plots  emit plot-ready CSV tables from a report directory

Exit codes: 0 ok, 2 configuration error, 3 insufficient data,
4 internal numeric failure or failed verification.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from ..env_gen import EnvSpec, generate
from ..errors import (
    ConfigError,
    DistributionError,
    InfobenchError,
    InsufficientDataError,
    NumericError,
    UsageError,
)
from ..ib_solver import default_beta_schedule, sweep_frontier
from ..info_core import JointTable
from .config import PROTOCOL_ALIASES, ExperimentConfig, default_config
from .protocols import (
    falsification_summary,
    format_falsification_table,
    run_protocol,
)
from .report import DETAIL_COLUMNS, ExperimentReport, verify_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSUFFICIENT = 3
EXIT_NUMERIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="infobench",
        description="compression-efficiency laboratory on exactly computable environments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-env", help="sample an environment to a stream file")
    p.add_argument("--spec", required=True, help="EnvSpec JSON file")
    p.add_argument("--out", required=True, help="output stream text file")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.add_argument("--length", type=int, default=None, help="override the stream length")

    p = sub.add_parser("ib-frontier", help="sweep a bottleneck frontier to CSV")
    p.add_argument("--joint", required=True, help="JointTable JSON file")
    p.add_argument("--z-size", type=int, required=True)
    p.add_argument("--beta-min", type=float, default=0.1)
    p.add_argument("--beta-max", type=float, default=100.0)
    p.add_argument("--beta-count", type=int, default=40)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output frontier.csv")

    p = sub.add_parser("run", help="run a protocol and persist its report")
    p.add_argument("protocol", choices=sorted(PROTOCOL_ALIASES))
    p.add_argument("--config", default=None, help="ExperimentConfig JSON file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("falsify", help="aggregate reports into the verdict table")
    p.add_argument("--reports", nargs="+", required=True, help="report directories")
    p.add_argument("--out", default=None, help="optional falsification.json path")

    p = sub.add_parser("verify", help="recompute a report from persisted records")
    p.add_argument("--report", required=True, help="report directory")

    p = sub.add_parser("export-plots", help="emit plot-ready CSVs from a report")
    p.add_argument("--report", required=True, help="report directory")
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_gen_env(args) -> int:
    spec = EnvSpec.from_json(Path(args.spec).read_text())
    params = dict(spec.params)
    if args.length is not None:
        params["length"] = args.length
    spec = EnvSpec(
        kind=spec.kind,
        params=params,
        seed=args.seed if args.seed is not None else spec.seed,
    )
    stream = spec_stream = generate(spec)
    Path(args.out).write_text(spec_stream.save_text())
    print(f"wrote {len(stream)} symbols (alphabet {stream.alphabet}) to {args.out}")
    return EXIT_OK


def _cmd_ib_frontier(args) -> int:
    joint = JointTable.from_json(Path(args.joint).read_text())
    betas = default_beta_schedule(args.beta_count, args.beta_min, args.beta_max)
    curve = sweep_frontier(
        joint, args.z_size, betas=betas, seed=args.seed, restarts=args.restarts
    )
    Path(args.out).write_text(curve.to_csv())
    n_conv = len(curve.converged_points())
    print(
        f"swept {len(curve.points)} betas ({n_conv} converged), "
        f"source I(X;Y) = {curve.source_ixy:.6f} bits -> {args.out}"
    )
    return EXIT_OK


def _cmd_run(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json(Path(args.config).read_text())
        canonical = PROTOCOL_ALIASES[args.protocol]
        if config.protocol != canonical:
            raise ConfigError(
                f"config protocol {config.protocol} != requested {canonical}"
            )
    else:
        config = default_config(args.protocol)
    config = config.with_overrides(
        seed=args.seed, trials=args.trials, output_dir=args.out
    )
    out_dir = config.output_dir or f"runs/{args.protocol}"
    report = run_protocol(config)
    report.save(out_dir)
    print(f"protocol {config.protocol}: {config.trials} trials -> {out_dir}")
    print(json.dumps(report.falsification, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_falsify(args) -> int:
    reports = [ExperimentReport.load(d) for d in args.reports]
    rows = falsification_summary(reports)
    print(format_falsification_table(rows))
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_verify(args) -> int:
    mismatches = verify_report(args.report)
    if mismatches:
        for m in mismatches:
            print(f"MISMATCH {m}", file=sys.stderr)
        print(f"verification failed: {len(mismatches)} mismatches", file=sys.stderr)
        return EXIT_NUMERIC
    print("verification ok: all statistics recomputed with zero mismatches")
    return EXIT_OK


def _cmd_export_plots(args) -> int:
    report = ExperimentReport.load(args.report)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cols = DETAIL_COLUMNS[report.protocol]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c for c, _ in cols])
    for rows in report.details:
        for row in rows:
            w.writerow([repr(float(v)) if t is float else str(v)
                        for v, (_, t) in zip(row, cols)])
    (out / "detail_long.csv").write_text(buf.getvalue())

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if report.protocol == "b2_efficiency_generalization":
        w.writerow(["trial", "rho", "p_neg", "p_pos", "verdict"])
        for r in report.per_trial:
            w.writerow([r["trial"], r["rho"], r["p_neg"], r["p_pos"], r["verdict"]])
    elif report.protocol == "b3_exception_decay":
        w.writerow(["trial", "setting_id", "family", "alpha", "alpha_ci_low",
                    "alpha_ci_high", "signature", "decay_slope", "decay_r2"])
        for r in report.per_trial:
            for sid, fam in sorted(r["families"].items()):
                w.writerow([r["trial"], sid, fam["family"], fam["alpha"],
                            fam["alpha_ci_low"], fam["alpha_ci_high"],
                            fam["signature"], fam["decay_slope"], fam["decay_r2"]])
    elif report.protocol == "b4_hierarchy_gradient":
        w.writerow(["trial", "strictly_increasing", "nondecreasing", "vacuous"])
        for r in report.per_trial:
            w.writerow([r["trial"], int(r["strictly_increasing"]),
                        int(r["nondecreasing"]), int(r["vacuous"])])
    else:
        w.writerow(["trial", "setting_id", "family", "theil_slope", "trend_negative"])
        for r in report.per_trial:
            for sid, fam in sorted(r["families"].items()):
                w.writerow([r["trial"], sid, fam["family"], fam["theil_slope"],
                            fam["trend_negative"]])
    (out / "trial_summary.csv").write_text(buf.getvalue())
    print(f"wrote plot tables to {out}")
    return EXIT_OK


_COMMANDS = {
    "gen-env": _cmd_gen_env,
    "ib-frontier": _cmd_ib_frontier,
    "run": _cmd_run,
    "falsify": _cmd_falsify,
    "verify": _cmd_verify,
    "export-plots": _cmd_export_plots,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except InsufficientDataError as exc:
        print(f"insufficient data: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT
    except (ConfigError, UsageError, DistributionError, FileNotFoundError,
            json.JSONDecodeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except InfobenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
