"""Exception hierarchy shared across the package."""


class AdaptChiError(Exception):
    """Base class for all errors raised by adaptchi."""


class InvalidMatrix(AdaptChiError, ValueError):
    """Matrix input is empty or contains NaN/Inf entries."""


class NumericalFailure(AdaptChiError, RuntimeError):
    """A dense decomposition did not converge."""


class InvalidRank(AdaptChiError, ValueError):
    """Requested rank lies outside ``[1, min(rows, cols)]``."""


class EigenNonConvergence(AdaptChiError, RuntimeError):
    """Iterative eigensolver ran out of iterations.

    Attributes:
        residual: best residual norm reached before giving up.
        bond: bond index at which the failure happened, when raised from DMRG.
    """

    def __init__(self, message, residual=float("nan"), bond=None):
        super().__init__(message)
        self.residual = residual
        self.bond = bond


class InvalidBasisState(AdaptChiError, ValueError):
    pass


class DegenerateSpectrum(AdaptChiError, ValueError):
    """Singular spectrum has no weight (all values zero)."""


class SizeGuard(AdaptChiError, ValueError):
    """Problem too large for a dense/exact code path."""


class InfiniteResponse(AdaptChiError, ValueError):
    """EMA with alpha = 1 tracks instantly; its time constant is undefined."""


class InsufficientSpectrum(AdaptChiError, ValueError):
    pass


class DegeneratePolynomial(AdaptChiError, ValueError):
    pass


class NoUltimateGain(AdaptChiError, RuntimeError):
    """Ziegler-Nichols scan found no sustained oscillation on the gain grid.

    Attributes:
        diagnostics: per-gain summary of the closed-loop runs.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []


class UnsupportedModel(AdaptChiError, ValueError):
    pass


class InternalConsistency(AdaptChiError, RuntimeError):
    """Cached environment block is stale for the requested bond."""


class InvalidDistribution(AdaptChiError, ValueError):
    pass


class ConfigError(AdaptChiError, ValueError):
    """Configuration file or override could not be parsed/validated."""


class SnapshotFormatError(AdaptChiError, ValueError):
    pass
