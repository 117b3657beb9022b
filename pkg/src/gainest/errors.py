"""Exception types shared across the estimator modules."""


class GainEstError(Exception):
    """Base class for errors raised by this package."""


class DegenerateInputError(GainEstError, ValueError):
    """An input is degenerate for the requested operation (e.g. a zero-norm
    observation where a positive norm is required)."""


class InfeasibleProbabilityError(GainEstError, ValueError):
    """A requested error probability lies below the method's feasibility floor.

    The floor value is carried so callers can fall back to another method.
    """

    def __init__(self, message: str, floor: float):
        super().__init__(message)
        self.floor = floor


class DegenerateSampleSizeError(GainEstError, ValueError):
    """The sample size is too small for the closed-form bound to exist."""


class RunawayError(GainEstError, RuntimeError):
    """An iterative search exceeded its hard safety limit."""
