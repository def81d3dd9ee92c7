"""Exception types raised by the solver library.

Plain invalid arguments (bad sizes, out-of-range orders) raise ValueError;
the classes here cover failures that carry domain meaning, so callers can
distinguish "you called it wrong" from "the computation cannot proceed".
"""


class SolverError(Exception):
    """Base class for solver-specific failures."""


class NestingError(SolverError):
    """Coarse and fine meshes are not nested (domain mismatch or ratio)."""


class ModelError(SolverError):
    """The refraction index violates the model assumption inf n > 1."""


class NotSpdError(SolverError):
    """Matrix handed to the Cholesky factorization is not positive definite."""


class IterationLimitError(SolverError):
    """Dense eigenvalue iteration failed to converge."""


class SingularSystemError(SolverError):
    """Dense linear system is singular to working precision."""


class ConvergenceError(SolverError):
    """Eigensolver could not converge the requested number of pairs.

    The pairs that did converge are attached as ``partial`` so callers can
    still inspect or report them.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class PairingError(SolverError):
    """A dual eigenvalue could not be matched to the primal spectrum."""


class DegenerateClusterError(SolverError):
    """Cluster bookkeeping produced an unusable dual basis."""


class ProjectionCollapseError(SolverError):
    """Projection of the dual eigenspace onto the target direction vanished."""


class QuotientDegenerateError(SolverError):
    """Generalized Rayleigh quotient denominator is numerically zero."""
