"""Shared exception types. The CLI maps these onto exit codes."""


class MllmLabError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(MllmLabError):
    """Array shapes do not satisfy an operation's contract."""


class InputError(MllmLabError):
    """Caller-supplied data is invalid (bad geometry, empty input, ...)."""


class ConfigError(MllmLabError):
    """A configuration value is out of its valid range or unknown."""


class EvaluationError(MllmLabError):
    """A numeric evaluation produced a non-finite or diverging result."""


class InvariantViolation(MllmLabError):
    """An internal consistency check failed. CLI exit code 2."""
