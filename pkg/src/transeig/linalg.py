"""Dense and banded linear algebra used by the eigensolvers.

The pencil matrices come from a tensor-product mesh with lexicographic
numbering, so K has a narrow profile and a banded Cholesky factorization
(LAPACK pbtrf/pbtrs via scipy) is the natural direct solver.  Small dense
eigen- and linear solves are delegated to LAPACK as well; this module only
adapts them to the error contract of the callers.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .errors import IterationLimitError, NotSpdError, SingularSystemError

__all__ = [
    "SpdFactor",
    "HessenbergEig",
    "cholesky",
    "hessenberg_eigenvalues",
    "dense_solve_complex",
]


@dataclass(eq=False)
class SpdFactor:
    """Banded Cholesky factor of a sparse SPD matrix.

    ``bands`` holds the upper factor in LAPACK banded storage; solve()
    accepts real or complex right-hand sides (complex ones are solved as
    two stacked real systems since the factor is real).
    """

    n: int
    bandwidth: int
    bands: np.ndarray

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs)
        if rhs.shape[0] != self.n:
            raise ValueError(f"rhs length {rhs.shape[0]} != {self.n}")
        if np.iscomplexobj(rhs):
            flat = rhs.reshape(self.n, -1)
            stacked = np.concatenate([flat.real, flat.imag], axis=1)
            sol = scipy.linalg.cho_solve_banded(
                (self.bands, False), stacked, check_finite=False
            )
            k = flat.shape[1]
            out = sol[:, :k] + 1j * sol[:, k:]
            return out.reshape(rhs.shape)
        return scipy.linalg.cho_solve_banded(
            (self.bands, False), rhs, check_finite=False
        )


def cholesky(matrix: sp.spmatrix) -> SpdFactor:
    """Factor a symmetric positive definite sparse matrix.

    The matrix is converted to upper banded storage (bandwidth = largest
    superdiagonal offset with a stored entry).  A symmetry check guards
    against assembly mistakes; indefiniteness surfaces as NotSpdError.
    """
    m = matrix.tocsc()
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    asym = abs(m - m.T).max()
    scale = abs(m).max()
    if asym > 1e-12 * max(scale, 1.0):
        raise NotSpdError(f"matrix is not symmetric (asymmetry {asym:.3e})")
    coo = m.tocoo()
    upper = coo.row <= coo.col
    rows = coo.row[upper]
    cols = coo.col[upper]
    vals = coo.data[upper]
    n = m.shape[0]
    bw = int((cols - rows).max()) if len(rows) else 0
    bands = np.zeros((bw + 1, n))
    bands[bw + rows - cols, cols] = vals
    try:
        factored = scipy.linalg.cholesky_banded(bands, lower=False, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotSpdError(f"matrix is not positive definite: {exc}") from exc
    return SpdFactor(n=n, bandwidth=bw, bands=factored)


@dataclass(eq=False)
class HessenbergEig:
    """Eigenvalues (and optional right eigenvectors) of a Hessenberg matrix."""

    values: np.ndarray
    vectors: np.ndarray | None


def hessenberg_eigenvalues(h: np.ndarray, compute_vectors: bool = False) -> HessenbergEig:
    """Eigendecomposition of a small real upper Hessenberg matrix.

    Wraps the dense QR iteration; complex eigenvalues of the real input
    come out in exact conjugate pairs.  A non-converging iteration (rare,
    LAPACK internal limit) raises IterationLimitError.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    try:
        if compute_vectors:
            values, vectors = scipy.linalg.eig(h, check_finite=False)
        else:
            values = scipy.linalg.eig(
                h, right=False, left=False, check_finite=False
            )
            vectors = None
    except scipy.linalg.LinAlgError as exc:
        raise IterationLimitError(f"QR iteration failed: {exc}") from exc
    return HessenbergEig(values=values, vectors=vectors)


def dense_solve_complex(g: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a small dense complex system (Gram systems of the projector).

    Raises SingularSystemError when elimination fails or the solution
    residual shows the system is singular to working precision.
    """
    g = np.asarray(g, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {g.shape}")
    if g.shape[0] > 20:
        raise ValueError(f"system size {g.shape[0]} exceeds the small-system cap")
    if rhs.shape[0] != g.shape[0]:
        raise ValueError("right-hand side length does not match the matrix")
    try:
        x = np.linalg.solve(g, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(f"dense solve failed: {exc}") from exc
    residual = np.linalg.norm(g @ x - rhs)
    floor = np.linalg.norm(rhs)
    if residual > 1e-10 * max(floor, 1e-300):
        raise SingularSystemError(
            f"system is singular to working precision (residual {residual:.3e})"
        )
    return x
