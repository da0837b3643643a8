"""Exception hierarchy shared by all modules."""


class SlqnError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(SlqnError, ValueError):
    pass


class NotPositiveDefinite(SlqnError, ValueError):
    pass


class InvalidRuleParameter(SlqnError, ValueError):
    pass


class EvaluationFailure(SlqnError, RuntimeError):
    """A measurement function raised or returned non-finite values."""


class SingularSystem(SlqnError, ValueError):
    """The corrected Gauss-Newton Hessian could not be inverted."""


class RouteMismatch(SlqnError, AssertionError):
    """Two algebraically equal expressions disagreed numerically."""


class DegenerateStep(SlqnError, ValueError):
    """The step is (numerically) zero, so no secant update is defined."""
