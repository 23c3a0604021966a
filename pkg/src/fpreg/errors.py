"""Exception types shared across the package."""


class FpregError(Exception):
    """Base class for all package-specific errors."""


class InvalidGeometry(FpregError):
    """Raised when a domain description cannot be meshed consistently."""


class SolveFailure(FpregError):
    """A linear solve did not reach the requested residual.

    Carries the achieved relative residual (when known) and, for time
    stepping, the step index at which the failure occurred.
    """

    def __init__(self, message, residual=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class UnsupportedDegree(FpregError):
    """Raised for polynomial degrees outside what an operation supports."""


class InterpolationFailure(FpregError):
    """Raised when a function is not finite at an interpolation node."""


class InvalidFit(FpregError):
    """Raised for ill-posed mixture fitting requests (e.g. k > #points)."""


class CollapseFailure(FpregError):
    """Raised when EM keeps collapsing components across restarts."""


class InvalidDistanceField(FpregError):
    """Raised when a distance field is not strictly positive at the dofs."""
