"""Exception hierarchy shared by all modules."""


class SpectralFlowError(Exception):
    """Base class for every error raised by the package."""


class DomainError(SpectralFlowError, ValueError):
    """Invalid or unbounded lattice domain."""


class ModelError(SpectralFlowError, ValueError):
    """Inconsistent model specification (dimension mismatch, negative Psi, ...)."""


class ConfigError(SpectralFlowError, ValueError):
    """Malformed experiment configuration."""


class NumericalError(SpectralFlowError, ArithmeticError):
    """A numerical routine could not deliver a trustworthy answer."""


class ThresholdHitsSpectrum(NumericalError):
    """The counting threshold lies within tolerance of an eigenvalue.

    Counts are defined with strict inequalities; callers are expected to
    perturb the threshold and retry.
    """

    def __init__(self, threshold, zeros=1, message="threshold hits spectrum"):
        super().__init__(f"{message} (threshold={threshold!r}, eigenvalues in window={zeros})")
        self.threshold = threshold
        self.zeros = zeros


class FactorizationError(NumericalError):
    """Breakdown of the symmetric factorization used for inertia."""


class ResolventSingular(NumericalError):
    """``A - lambda I`` is (numerically) singular on the truncated domain."""


class NotInGap(SpectralFlowError, ValueError):
    """The spectral parameter is not inside a gap of the periodic operator."""
