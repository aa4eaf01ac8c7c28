"""Exception types shared across the package."""


class FIOError(Exception):
    """Base class for all package errors."""


class DomainError(FIOError, ValueError):
    """Input outside the domain where an operation is defined."""


class RefinementError(FIOError):
    """A continuation step was too coarse to follow the branch reliably."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class TransversalityError(FIOError):
    """No subspace transversal to the given ones was found."""


class ChartError(FIOError):
    """A trajectory or query left the region covered by the chart."""

    def __init__(self, message, exit_time=None):
        super().__init__(message)
        self.exit_time = exit_time


class QuadratureBudgetError(FIOError):
    """The requested quadrature exceeds the configured node budget."""
