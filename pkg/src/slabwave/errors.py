"""Exception and warning types shared across slabwave."""


class SlabwaveError(Exception):
    """Base class for all library errors."""


class DomainError(SlabwaveError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class SingularityError(DomainError):
    """Evaluation requested exactly at a singular point (e.g. H0 at z = 0)."""


class ThresholdError(DomainError):
    """Spectral parameter sits on (or too close to) a threshold alpha_n."""


class GeometryRejectedError(DomainError):
    """An eigenfrequency collides with a threshold; rescale R or L."""


class NumericError(SlabwaveError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance.

    ``estimate`` carries the last achieved error or gap when available.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class ContractionError(NumericError):
    """Neumann series requested although the contraction estimate is >= 1/2."""


class BranchCutWarning(UserWarning):
    """Continued kernel evaluated close to the logarithmic branch cut."""


class AccuracyWarning(UserWarning):
    """Argument outside the range where accuracy has been validated."""


class NearResonanceWarning(UserWarning):
    """Dense solve is ill-conditioned; the parameter is close to a resonance."""


class SpectrumWarning(UserWarning):
    """Discrete Schroedinger operator has non-positive eigenvalues."""
