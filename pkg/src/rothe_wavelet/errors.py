"""Exception types raised across the package."""


class AssumptionViolation(ValueError):
    """A standing modelling assumption does not hold (e.g. a divergent noise weight)."""


class TruncationError(ValueError):
    """A truncated series has a tail that is too large relative to its head."""


class RefinementExhausted(RuntimeError):
    """A tolerance could not be met within the configured maximal level."""


class NonconvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap.

    ``residual`` carries the last certified error bound.
    """

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class InsufficientDataError(ValueError):
    """Too few usable points for a rate fit."""
