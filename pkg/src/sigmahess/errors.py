"""Exception types raised across the package."""


class SigmaHessError(Exception):
    """Base class for all package errors."""


class NumericalFailure(SigmaHessError):
    """An iterative kernel (eigensolver, root finder) did not converge."""


class DegenerateSpectrumError(SigmaHessError):
    """Eigenvalue gap below the separation tolerance."""


class NotInConeError(SigmaHessError):
    """A vector required to lie in a Garding cone does not."""


class SamplerExhausted(SigmaHessError):
    """Rejection sampling exceeded its attempt budget."""


class NotSpacelikeError(SigmaHessError):
    """Gradient too close to the light cone (|Du| >= 1 - tol)."""


class ExpRangeError(SigmaHessError):
    """Curvature entries outside the range where exp() is representable."""


class NonUnitNormalError(SigmaHessError):
    pass


class NoRootError(SigmaHessError):
    pass


class SolverError(SigmaHessError):
    """Newton/continuation failure; ``diagnostics`` carries the state summary."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SeedError(SolverError):
    pass


class LineSearchError(SolverError):
    pass


class SingularJacobianError(SolverError):
    pass


class ConfigError(SigmaHessError):
    pass
