"""Exception types raised across the toolkit."""


class PerturbEvalError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(PerturbEvalError, ValueError):
    """Array shapes do not match what an operation requires."""


class ParameterError(PerturbEvalError, ValueError):
    """A parameter is outside its documented range."""


class SizeError(PerturbEvalError, ValueError):
    """A problem size exceeds a hard guard (e.g. exhaustive enumeration)."""


class DataError(PerturbEvalError, ValueError):
    """Data content is invalid (NaN/Inf scores, malformed files)."""


class BackendError(PerturbEvalError, RuntimeError):
    """A classifier backend failed or is unavailable."""
