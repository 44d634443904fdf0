"""Exception hierarchy shared across the package.

The CLI maps these to stable exit codes: ConfigError -> 2, DataError -> 3,
NumericError -> 4.
"""


class MotionliftError(Exception):
    """Base class for all package errors."""


class ConfigError(MotionliftError):
    """Invalid configuration value, unknown key, or bad mode string."""


class DataError(MotionliftError):
    """Malformed or inconsistent input data (clips, files, checkpoints)."""


class ShapeError(MotionliftError):
    """Tensor shape mismatch; message names the offending shapes."""


class NumericError(MotionliftError):
    """NaN/Inf encountered where finite values are required."""
