"""Exception types shared across the package.

Every failure mode that callers are expected to catch has its own class;
anything else propagates as a plain ValueError/ArithmeticError from numpy.
"""


class McscatError(Exception):
    """Base class for all package-specific errors."""


class NonHermitian(McscatError):
    """Input matrix is not Hermitian within the documented tolerance."""


class NoConvergence(McscatError):
    """An iterative or extrapolated quantity failed to settle."""


class Singular(McscatError):
    """Linear solve hit a pivot below the relative floor."""


class BoundaryEigenvalue(McscatError):
    """An eigenvalue sits within gap_tol of an interval endpoint."""


class IllConditionedX(McscatError):
    """Weight operator condition number exceeds cond_cap."""


class IntervalContainsZero(McscatError):
    """The analysis interval must stay away from zero energy."""


class BadDimensions(McscatError):
    """Matrix blocks have inconsistent shapes."""


class BadGrid(McscatError):
    """Grid points are not strictly increasing inside the interval."""


class NearSingularFredholm(McscatError):
    """I + T R0(z) (or a sandwiched analogue) is numerically singular."""


class ZeroEnergy(McscatError):
    """Operation requires z (or lambda) bounded away from zero."""


class MultiplicityError(McscatError):
    """Spectral bins do not all carry the same eigenvalue count."""


class TooFewBins(McscatError):
    """Not enough bins for the requested estimate."""


class OutsideInterval(McscatError):
    """Energy argument lies outside the decomposition interval."""


class Unconverged(McscatError):
    """Time-limit surrogate did not stabilise over the parameter schedule."""


class ExceptionalEnergy(McscatError):
    """Requested energy was flagged as exceptional (embedded eigenvalue)."""


class DimensionMismatch(McscatError):
    """Operators that must share a space have different sizes."""
