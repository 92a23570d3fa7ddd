"""Protocol runners, configuration, reports, falsification table, CLI."""

from .config import (
    PROTOCOL_ALIASES,
    PROTOCOL_ENV_KINDS,
    PROTOCOLS,
    ExperimentConfig,
    default_config,
    default_env,
    default_suite,
    derive_seed,
)
from .protocols import (
    falsification_summary,
    format_falsification_table,
    run_b2,
    run_b3,
    run_b4,
    run_b5,
    run_protocol,
)
from .report import ExperimentReport, verify_report

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "PROTOCOLS",
    "PROTOCOL_ALIASES",
    "PROTOCOL_ENV_KINDS",
    "default_config",
    "default_env",
    "default_suite",
    "derive_seed",
    "falsification_summary",
    "format_falsification_table",
    "run_b2",
    "run_b3",
    "run_b4",
    "run_b5",
    "run_protocol",
    "verify_report",
]
