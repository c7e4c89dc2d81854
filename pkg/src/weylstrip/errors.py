"""Exception types shared across the package."""


class WeylstripError(Exception):
    """Base class for numerical failures in this package."""


class PropagationError(WeylstripError):
    """Linear-system integration failed (step underflow, blow-up, bad span)."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class SingularDenominatorError(WeylstripError):
    """Moebius/LFT denominator numerically singular (exceptional spectral point
    or violated parameter precondition)."""


class BallDomainError(WeylstripError):
    """The 2,2 block of the quadratic form is not negative definite, or the
    Schur complement has negative eigenvalues beyond the clipping threshold."""


class RecursionBlowupError(WeylstripError):
    """Corner-jet recursion produced coefficients incompatible with a bounded
    solution; ``order`` is the derivative order reached."""

    def __init__(self, message, order):
        super().__init__(message)
        self.order = order


class SpectralDomainError(WeylstripError):
    """Spectral point lies outside the admissible domain of the operation."""
