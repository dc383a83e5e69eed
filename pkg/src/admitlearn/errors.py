"""Exception types raised across the package."""


class AdmitLearnError(Exception):
    """Base class for all package errors."""


class DomainError(AdmitLearnError, ValueError):
    """Input outside the mathematical domain of an operation."""


class StabilityConstraintError(DomainError):
    """Admittance parameters violate the positivity (stability) constraint."""


class NumericError(AdmitLearnError, FloatingPointError):
    """NaN or Inf reached a numeric routine."""


class ShapeError(AdmitLearnError, ValueError):
    """Array lengths or axis counts disagree."""


class OrderingError(AdmitLearnError, ValueError):
    """Timestamps are not strictly increasing."""


class UnderdeterminedError(AdmitLearnError, ValueError):
    """Too few samples to fit a model."""


class DegenerateFitError(AdmitLearnError, ValueError):
    """Regressors are rank deficient.

    The ``fallback`` attribute carries the ridge-regularized estimate so callers
    can still use it knowingly.
    """

    def __init__(self, message, fallback=None):
        super().__init__(message)
        self.fallback = fallback


class ConstraintError(AdmitLearnError, ValueError):
    """A candidate lies outside the feasible set of an optimization problem."""


class ConfigError(AdmitLearnError, ValueError):
    """Malformed or inconsistent configuration."""
