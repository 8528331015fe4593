"""Exception types shared across the package."""


class DimensionError(ValueError):
    """An input vector or matrix has an incompatible shape."""


class NumericalError(RuntimeError):
    """A numerical routine failed (e.g. SVD non-convergence, non-finite loss)."""


class DivergenceError(NumericalError):
    """An SDE integration produced a non-finite state.

    Carries the step index and time at which the blow-up was detected.
    """

    def __init__(self, message, step=None, t=None):
        super().__init__(message)
        self.step = step
        self.t = t


class ScheduleDomainError(ValueError):
    """A time outside the clipped schedule interval was requested."""


class UnsupportedVariantError(ValueError):
    """An operation was called with a schedule variant it does not support."""


class InvalidCovarianceError(ValueError):
    """A noise covariance has negative eigenvalues beyond tolerance."""


class CapacityError(ValueError):
    """A dense materialization was requested above the supported size."""


class DegeneratePosteriorError(ValueError):
    """The observation is incompatible with the jointly singular model."""


class ConfigError(ValueError):
    """An experiment config file failed validation."""
