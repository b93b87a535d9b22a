"""Exception types shared across the package."""


class AcxError(Exception):
    """Base class for all package errors."""


class DimensionError(AcxError):
    """Inputs have inconsistent shapes or lengths."""


class InvertibilityError(AcxError):
    """ARMAX lag polynomial is outside the invertible region."""


class NumericsError(AcxError):
    """A numeric computation produced non-finite or inadmissible values."""


class SingularMatrixError(AcxError):
    """A matrix that must be invertible is singular beyond tolerance.

    Carries the offending condition number in ``condition`` when known.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class EstimationError(AcxError):
    """Optimization failed to produce a usable estimate."""


class ConfigError(AcxError):
    """Invalid experiment or CLI configuration."""
