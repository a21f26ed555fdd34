"""Exception types shared across the package."""


class TopologyError(Exception):
    """Mesh connectivity is inconsistent (e.g. a non-manifold edge)."""


class AssumptionViolation(Exception):
    """A level-set configuration breaks a precondition of the cut machinery.

    Raised when a nodal value sits exactly on the interface or when a
    perturbation flips the cut status of a cell.
    """


class SingularDerivativeError(ArithmeticError):
    """Dual arithmetic hit a point where the derivative is undefined."""


class NotCutError(ValueError):
    """cut_triangle was called on an uncut (single-sign) configuration."""


class DegenerateCrossingError(Exception):
    """Interface runs (numerically) parallel to a facet it crosses."""


class DegenerateGradientError(Exception):
    """Level-set gradient vanishes on a cut cell."""


class SolverError(Exception):
    """Base class for linear-solver failures."""


class SingularSystemError(SolverError):
    """Factorization failed; usually an untagged isolated volume."""


class NonConvergenceError(SolverError):
    """Iterative solve exceeded its iteration budget."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []


class PartitionIntegrityError(Exception):
    """Overlap data of a simulated partition is inconsistent."""


class ConfigError(Exception):
    """Bad run configuration (unknown key, missing file, invalid value)."""
