"""Exception types shared across the package."""


class SumoError(Exception):
    """Base class for all package errors."""


class ShapeError(SumoError, ValueError):
    """Array dimensions do not agree."""


class ParameterError(SumoError, ValueError):
    """An argument is outside the range an operation accepts (e.g. k > N)."""


class DomainError(SumoError, ValueError):
    """A numeric input lies outside the mathematical domain of an operation."""


class EmptyDatasetError(ParameterError):
    pass


class ParseError(SumoError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(SumoError, ArithmeticError):
    """A loss or activation became non-finite."""

    def __init__(self, message, layer=None):
        self.layer = layer
        if layer is not None:
            message = f"{message} (layer {layer})"
        super().__init__(message)


class UndefinedCorrelationError(SumoError, ValueError):
    """Correlation requested for a constant vector."""


class ConfigError(SumoError, ValueError):
    """A run configuration failed validation."""
