"""Exception hierarchy shared by every module of the package."""


class ConformalIOError(Exception):
    """Base class for all package errors."""


class DimensionError(ConformalIOError, ValueError):
    """Vectors or matrices have incompatible shapes."""


class InfeasibleDecisionError(ConformalIOError, ValueError):
    """A decision violates the constraints of its forward instance."""


class NegativeCycleError(ConformalIOError):
    """A negative-cost cycle lies on some origin-destination walk."""


class DegenerateOptimalSetError(ConformalIOError):
    """The optimal set cannot be represented (e.g. zero-cost cycles)."""


class ProblemTooLargeError(ConformalIOError):
    """Exhaustive enumeration was requested beyond its supported size."""


class InfeasibleLPError(ConformalIOError):
    """A linear program has an empty feasible region."""


class UnboundedLPError(ConformalIOError):
    """A linear program is unbounded in the optimization direction."""


class NumericalError(ConformalIOError):
    """The simplex basis became too ill-conditioned to continue."""


class IterationLimitError(ConformalIOError):
    """An iterative method hit its iteration cap.

    ``best`` carries the last (or best) iterate so callers can inspect it.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InverseInfeasibleError(ConformalIOError):
    """No nonzero parameter vector makes an observed decision optimal."""


class ConfigError(ConformalIOError, ValueError):
    """Invalid experiment configuration."""
