"""Shared exception types."""


class GredError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(GredError, ValueError):
    """Invalid configuration or parameter combination."""


class PackingSaturationError(GredError, RuntimeError):
    """Rejection sampling cannot place the requested number of points."""


class CdpViolationError(ConfigError):
    """Correlation decay requirement d * max(theta) < 1 is violated."""


class NotPositiveDefiniteError(GredError, ValueError):
    """A matrix required to be positive definite failed factorization."""


class EmptyCellError(GredError, ValueError):
    """A lattice cell contains no vertices; the caller should mark it gray."""


class InfeasibleBetaError(ConfigError):
    """Requested perimeter/sqrt(area) ratio outside the constructible range."""


class CurveError(GredError, ValueError):
    """A curve does not satisfy the preconditions of a rate functional."""
