class SdidError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SdidError, ValueError):
    """Invalid option or parameter value (bad level, B < 1, ...)."""


class DataError(SdidError, ValueError):
    """Input data violates a dataset invariant or lacks a requested level."""


class NumericalError(SdidError, ArithmeticError):
    """A computation is undefined on the given data (rank deficiency, zero SE, ...)."""
