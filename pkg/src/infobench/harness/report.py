"""Experiment reports: persistence, loading, and independent verification.

A report directory holds ``report.json`` (trial rows, summary,
falsification verdict, provenance) plus ``per_trial/trial_XXX.csv`` with
the raw per-trial records. Every derived statistic is a pure function of
those records and the config, so ``verify_report`` can recompute the whole
report from disk and demand exact agreement. CSV floats are written with
``repr`` so values round-trip losslessly and outputs are byte-identical
across repeated runs.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, UsageError
from .config import ExperimentConfig

#: Column names and types of the per-trial CSV records, by protocol. The
#: order matches the tuples produced by the trial runners.
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


def _format_cell(value, typ) -> str:
    if typ is float:
        return repr(float(value))
    return str(value)


def detail_rows_to_csv(protocol: str, rows: list[tuple]) -> str:
    cols = DETAIL_COLUMNS[protocol]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([c for c, _ in cols])
    for row in rows:
        w.writerow([_format_cell(v, t) for v, (_, t) in zip(row, cols)])
    return buf.getvalue()


def detail_rows_from_csv(protocol: str, text: str) -> list[tuple]:
    cols = DETAIL_COLUMNS[protocol]
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    expected = [c for c, _ in cols]
    if header != expected:
        raise UsageError(f"unexpected CSV header {header}, expected {expected}")
    out = []
    for row in reader:
        if not row:
            continue
        out.append(tuple(t(v) for v, (_, t) in zip(row, cols)))
    return out


@dataclass
class ExperimentReport:
    """Everything a protocol run produced: rows, summary, verdict, provenance."""

    protocol: str
    per_trial: list[dict]
    summary: dict
    falsification: dict
    config: ExperimentConfig
    details: list[list[tuple]] = field(default_factory=list)

    def provenance(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "version": __version__,
        }

    def to_json(self) -> str:
        return json.dumps(
            {
                "protocol": self.protocol,
                "per_trial": self.per_trial,
                "summary": self.summary,
                "falsification": self.falsification,
                "provenance": self.provenance(),
            },
            indent=2,
            sort_keys=True,
        )

    def save(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        (out / "per_trial").mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(self.to_json())
        for i, rows in enumerate(self.details):
            path = out / "per_trial" / f"trial_{i:03d}.csv"
            path.write_text(detail_rows_to_csv(self.protocol, rows))
        return out

    @classmethod
    def load(cls, out_dir: str | Path) -> "ExperimentReport":
        out = Path(out_dir)
        report_path = out / "report.json"
        if not report_path.exists():
            raise UsageError(f"no report.json under {out}")
        obj = json.loads(report_path.read_text())
        config = ExperimentConfig.from_dict(obj["provenance"]["config"])
        details = []
        trial_dir = out / "per_trial"
        if trial_dir.exists():
            for path in sorted(trial_dir.glob("trial_*.csv")):
                details.append(detail_rows_from_csv(obj["protocol"], path.read_text()))
        return cls(
            protocol=obj["protocol"],
            per_trial=obj["per_trial"],
            summary=obj["summary"],
            falsification=obj["falsification"],
            config=config,
            details=details,
        )


def _compare(expected, stored, path: str, out: list[str], exact_subset: bool) -> None:
    """Recursive exact comparison; ``exact_subset`` lets stored rows carry
    extra persisted constants beyond the recomputable fields."""
    if isinstance(expected, dict):
        if not isinstance(stored, dict):
            out.append(f"{path}: expected mapping, found {type(stored).__name__}")
            return
        for k, v in expected.items():
            if k not in stored:
                out.append(f"{path}.{k}: missing from stored report")
            else:
                _compare(v, stored[k], f"{path}.{k}", out, exact_subset)
        if not exact_subset:
            for k in stored:
                if k not in expected:
                    out.append(f"{path}.{k}: unexpected key in stored report")
        return
    if isinstance(expected, (list, tuple)):
        if not isinstance(stored, (list, tuple)) or len(stored) != len(expected):
            out.append(f"{path}: sequence mismatch")
            return
        for i, (a, b) in enumerate(zip(expected, stored)):
            _compare(a, b, f"{path}[{i}]", out, exact_subset)
        return
    if isinstance(expected, float) and isinstance(stored, (int, float)):
        if expected != float(stored):
            out.append(f"{path}: {stored!r} != recomputed {expected!r}")
        return
    if expected != stored:
        out.append(f"{path}: {stored!r} != recomputed {expected!r}")


def verify_report(out_dir: str | Path) -> list[str]:
    """Recompute every derived statistic from persisted records.

    Returns the list of mismatches (empty means the report is internally
    consistent: trial statistics follow from the CSV records, and summary
    and falsification follow from the trial rows).
    """
    from . import protocols  # late import; protocols depends on this module

    report = ExperimentReport.load(out_dir)
    if report.protocol not in protocols._IMPL:
        raise ConfigError(f"unknown protocol {report.protocol!r}")
    _, trial_stats, summarize, falsify = protocols._IMPL[report.protocol]
    mismatches: list[str] = []
    if len(report.details) != len(report.per_trial):
        mismatches.append(
            f"per_trial CSVs ({len(report.details)}) != trial rows ({len(report.per_trial)})"
        )
    for i, det in enumerate(report.details):
        if i >= len(report.per_trial):
            break
        recomputed = trial_stats(det, report.config, i)
        _compare(recomputed, report.per_trial[i], f"trial[{i}]", mismatches,
                 exact_subset=True)
    summary = summarize(report.per_trial, report.config)
    _compare(summary, report.summary, "summary", mismatches, exact_subset=False)
    falsification = falsify(report.per_trial, summary, report.config)
    _compare(falsification, report.falsification, "falsification", mismatches,
             exact_subset=False)
    return mismatches
