"""Semantic exception hierarchy. Public functions raise these, never bare ValueError."""


class InfobenchError(Exception):
    """Base error for this package."""


class UsageError(InfobenchError, ValueError):
    """Arguments violate a documented precondition (shape, range, axis, ...)."""


class DistributionError(InfobenchError, ValueError):
    """A probability vector or table is malformed (negative mass, bad normalization)."""


class ModelCoverageError(InfobenchError):
    """A predictor assigns zero probability to an observed event and flooring is disabled."""


class CapacityError(InfobenchError):
    """A generator would exceed its alphabet-size guard."""


class InsufficientDataError(InfobenchError):
    """Too few samples/points for the requested estimate to be meaningful."""


class ConfigError(InfobenchError, ValueError):
    """Experiment configuration is invalid or inconsistent."""


class NumericError(InfobenchError, ArithmeticError):
    """An internal numeric computation failed (non-finite values, failed decomposition)."""
