"""Exception types shared across the package."""


class PolarfuseError(Exception):
    """Base class for all package errors."""


class DimensionError(PolarfuseError, ValueError):
    """Array shapes are incompatible with the requested operation."""


class IntegrityError(PolarfuseError, ValueError):
    """Data violates a numerical invariant (NaN/Inf, off unit circle, ...)."""


class ConfigError(PolarfuseError, ValueError):
    """Invalid configuration or missing component for a configuration."""


class NumericalError(PolarfuseError, RuntimeError):
    """Training or sampling produced non-finite values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
