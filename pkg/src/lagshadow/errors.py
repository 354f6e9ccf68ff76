"""Exception types shared across the package."""


class ShadowError(Exception):
    """Base class for all package-specific failures."""


class ZeroVector(ShadowError):
    """A homogeneous coordinate vector is numerically zero and cannot be normalized."""


class MismatchedSpace(ShadowError):
    """Two objects live over ambient spaces with different factor structure."""


class BaseMismatch(ShadowError):
    """Tangent vectors are based at different points."""


class OnDivisor(ShadowError):
    """The section vanishes (numerically) at the point; the potential is +infinity there."""


class DegenerateFrame(ShadowError):
    """Gram-Schmidt collapsed while building an orthonormal horizontal frame."""


class NoConvergence(ShadowError):
    """An iterative solve (Gauss-Newton projection) failed to reach its tolerance."""


class RankLoss(ShadowError):
    """The constraint Jacobian dropped below the expected rank (near-singular variety point)."""


class EmptySample(ShadowError):
    """No sample points were found on the requested intersection."""


class WrongScenario(ShadowError):
    """A scenario-specific verifier was called on incompatible data."""


class TooSparse(ShadowError):
    """Not enough neighbors to estimate a tangent space at a point."""


class NoTangents(ShadowError):
    """No point of the cloud carries a tangent frame."""


class IncompatibleCandidate(ShadowError):
    """A candidate model does not fit the ambient space of the cloud."""


class NewCriticalDiscovered(ShadowError):
    """A descent terminated at a critical point missing from the census.

    Carries the offending locations in ``.locations`` so the caller can
    re-seed the census and retry.
    """

    def __init__(self, message, locations=None):
        super().__init__(message)
        self.locations = locations or []


class EmptyIntersection(ShadowError):
    """The near-variety filter retained no points of the ambient cloud."""


class StepCollapse(ShadowError):
    """The adaptive integrator step fell below the hard floor (near-singular flow)."""

    def __init__(self, message, last_point=None):
        super().__init__(message)
        self.last_point = last_point


class ParseError(ShadowError):
    """A configuration document is syntactically invalid."""


class ValidationError(ShadowError):
    """A configuration document violates a schema invariant."""
