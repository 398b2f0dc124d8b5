"""Exception types shared across the package."""


class MemnError(Exception):
    """Base class for package-specific failures."""


class DegeneracyError(MemnError):
    """A determinant or linear system is singular (boundary strategies)."""


class ConvergenceError(MemnError):
    """An iterative method did not converge within its iteration budget."""


class BoundaryMarginError(MemnError):
    """A point is too close to the boundary of the probability cube."""


class InvarianceViolationError(MemnError):
    """A quantity that should be invariant was observed to differ."""
