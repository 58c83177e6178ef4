"""Exception hierarchy shared by all submodules."""


class TwoPhotonError(Exception):
    """Base class for errors raised by this package."""


class TruncationError(TwoPhotonError, ValueError):
    """Fock cutoff too small for the requested state or operation."""


class DegenerateStateError(TwoPhotonError, ValueError):
    """A state cannot be normalised (e.g. CES- at alpha = 0)."""


class DimensionError(TwoPhotonError, ValueError):
    """Operator / density-matrix dimensions do not match."""


class ParameterError(TwoPhotonError, ValueError):
    """Physical parameters violate a precondition."""


class SolverError(TwoPhotonError, RuntimeError):
    """A numerical solver failed to converge."""


class DegenerateSteadyStateError(SolverError):
    """The Liouvillian has more than one stationary state.

    Attributes
    ----------
    null_dim : int
        Estimated dimension of the null space (lower bound when the
        eigensolver only resolved part of it).
    """

    def __init__(self, null_dim, message=None):
        self.null_dim = null_dim
        super().__init__(message or f"steady state is not unique: null space dimension >= {null_dim}")


class NonStationaryError(SolverError):
    """A density matrix passed as steady state is not annihilated by L."""


class ConfigError(TwoPhotonError, ValueError):
    """Invalid CLI configuration."""
