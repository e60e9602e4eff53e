"""Exception and warning types raised across the package."""


class MzmemError(Exception):
    """Base class for all package errors."""


class NumericalFailure(MzmemError):
    """A numerical routine produced a non-finite or unconverged result."""


class InvalidConfig(MzmemError, ValueError):
    """Parameters or configuration values are out of range."""


class NotLinear(MzmemError):
    """A linear-system operation was requested on a system without a matrix."""


class DegenerateRatio(MzmemError):
    """A norm in the memory hierarchy vanished, so the hierarchy terminates.

    Attributes
    ----------
    order : int
        First index ``j`` with a zero denominator.
    """

    def __init__(self, msg, order=None):
        super().__init__(msg)
        self.order = order


class NeedsUserBound(MzmemError):
    """A semigroup constant has no closed form and must be supplied."""


class InsufficientOrder(MzmemError):
    """A bound of order ``p`` was requested beyond the available ratios."""


class Diverged(MzmemError):
    """The integrator met a non-finite state.

    Attributes
    ----------
    t : float
        Time at which the state stopped being finite.
    """

    def __init__(self, t):
        super().__init__(f"non-finite state at t={t:.6g}")
        self.t = t


class UnreliableEstimate(MzmemError):
    """Too many Monte-Carlo samples diverged for the estimate to be trusted."""


class DegenerateObservable(MzmemError):
    """The observable has zero second moment so it cannot be normalized."""


class IllConditioned(MzmemError):
    """The requested representation is too ill-conditioned to build."""


class ContourFailure(MzmemError):
    """Non-finite terms, or a vanishing denominator, on the inversion contour."""


class Unsupported(MzmemError):
    """The input is outside the class of expressions the routine handles."""


class TuningWarning(UserWarning):
    """Sampler diagnostics are outside their recommended range."""
