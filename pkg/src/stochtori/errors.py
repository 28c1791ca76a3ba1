"""Exception types raised across the package."""


class StochToriError(Exception):
    """Base class for all package errors."""


class EmptyPathError(StochToriError, ValueError):
    """A sampler was asked for a path on a grid with no steps."""


class UnsupportedMeasureError(StochToriError, ValueError):
    """The jump measure is not of finite activity."""


class IntegrationError(StochToriError, ArithmeticError):
    """Numerical integration (quadrature or ODE) did not meet its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DomainError(StochToriError, ValueError):
    """Argument outside the domain of a chart or frequency map."""


class DomainExitError(DomainError):
    """A simulated action path left the domain of the frequency map."""

    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class SpecificationError(StochToriError, ValueError):
    """Inconsistent model data (multiplicities, normalisation, bounds)."""


class AlignmentError(StochToriError, ValueError):
    """Sampling times of a statistic do not fall on the simulation grid."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class ConfigError(StochToriError, ValueError):
    """Invalid run configuration; carries the offending line when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ReplicaBudgetError(StochToriError, RuntimeError):
    """Too many replicas were discarded after leaving the chart domain."""

    def __init__(self, message, discarded, replicas):
        super().__init__(message)
        self.discarded = discarded
        self.replicas = replicas
