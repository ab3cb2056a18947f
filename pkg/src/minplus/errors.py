"""Exception types raised by the filtering library."""


class MinPlusError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(MinPlusError, ValueError):
    pass


class NonConvex(MinPlusError):
    """Quadratic block of a form is not positive definite."""


class FitFailed(MinPlusError):
    """Constrained majorant fit could not be produced on a sub-box."""

    def __init__(self, message, box=None):
        super().__init__(message)
        self.box = box


class RankDeficient(MinPlusError):
    pass


class SingularGain(MinPlusError):
    """``Q_eta + B^T N B`` failed to factor."""


class StepFailed(MinPlusError):
    """A filter step raised; ``step`` carries the failing time index."""

    def __init__(self, step, cause):
        super().__init__(f"step {step}: {cause}")
        self.step = step
        self.cause = cause


class OutOfDomain(MinPlusError):
    """Every disturbance candidate of a grid query left the grid box."""


class ConfigError(MinPlusError, ValueError):
    pass
