"""Exception types shared across the package."""


class DefragError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(DefragError, ValueError):
    """Operand shapes are incompatible."""


class ValidationError(DefragError, ValueError):
    """An argument is outside its allowed domain."""


class UsageError(DefragError, RuntimeError):
    """An API was called in an invalid state or order."""


class FormatError(DefragError, ValueError):
    """A file does not follow its expected binary layout."""


class DegeneracyError(DefragError, ArithmeticError):
    """A numerical quantity is degenerate (rank deficiency, zero denominator)."""


class ConfigError(DefragError, ValueError):
    """A run configuration is invalid or incomplete."""


class TrainingError(DefragError, RuntimeError):
    """Training diverged; carries the failing epoch/batch and loss terms."""

    def __init__(self, message, *, epoch=None, batch=None, terms=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
        self.terms = dict(terms or {})
