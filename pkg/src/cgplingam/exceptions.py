"""Exception and warning types shared across the package."""


class CgpLingamError(Exception):
    """Base class for errors raised by this package."""


class ConvergenceError(CgpLingamError, RuntimeError):
    """An iterative solver hit its iteration cap without meeting tolerance."""

    def __init__(self, message, kkt_residual=None):
        super().__init__(message)
        self.kkt_residual = kkt_residual


class UnstableProcessError(CgpLingamError, RuntimeError):
    """A simulated process blew past the explosion threshold.

    ``time_index`` is the first offending sample.
    """

    def __init__(self, message, time_index=None):
        super().__init__(message)
        self.time_index = time_index


class DivergenceError(CgpLingamError, RuntimeError):
    """An objective that must not increase kept increasing."""


class DegenerateInputError(CgpLingamError, ValueError):
    """Input carries too little information (e.g. rank-deficient covariance)."""


class IdentifiabilityError(CgpLingamError, RuntimeError):
    """Permutation/scaling resolution failed: zero diagonal under every permutation."""


class NonGaussianityWarning(UserWarning):
    """Recovered sources look Gaussian; independence-based identification is void."""
