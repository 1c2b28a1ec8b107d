"""Structured exception types shared across the package."""


class MfldError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MfldError):
    """Array arguments whose shapes do not line up."""


class DataValidationError(MfldError):
    """Dataset with NaN/Inf entries or malformed targets."""


class DomainError(MfldError):
    """Mathematical precondition violated, e.g. a dual vector outside the
    conjugate domain or a step-size hypothesis failure."""


class DivergenceError(MfldError):
    """Dynamics or sampler state left the finite range (step size too large)."""


class GridError(MfldError):
    """Quadrature grid does not cover the effective support of the density."""


class EstimatorError(MfldError):
    """Estimator precondition violated (sample count, duplicate samples)."""


class ConfigError(MfldError):
    """Invalid, inconsistent, or unknown experiment configuration."""
