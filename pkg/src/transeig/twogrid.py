r"""Two-grid correction for transmission eigenvalues.

A coarse-mesh eigensolve delivers an eigenpair (lambda_H, x_H) together
with a projected dual vector y*_H.  One banded solve per field on the fine
mesh lifts the pair,

    K_h x = lambda_H M_h P x_H,      K_h y = lambda_H M_h^T P y*_H,

and the generalized Rayleigh quotient lambda^h = (y^T K_h x) / (y^T M_h x)
recovers the fine-mesh eigenvalue to higher order than lambda_H itself,
at the cost of a single factorization instead of a fine eigensolve.

The dual projection follows the cluster of lambda_H: the dual eigenspace
basis of the whole cluster (q vectors) is combined so that, in function
coefficients, the combination is the A-orthogonal projection of x_H onto
that span, then A-normalized.  For a simple eigenvalue this reduces to
picking the matching dual eigenvector.  Raw dual vectors (transpose
convention) relate to function coefficients by conjugation, which is why
the conjugations below sit where they do.

Prolongation between nested meshes is exact: a coarse bicubic Hermite
function is resampled by evaluating its value, gradient and mixed second
derivative at every fine node, which reproduces the function identically
(the fine space contains the coarse one).

Everything here runs on the mass-block pencil (no identity substitution).
Swapping the Gram blocks for the identity keeps the spectrum of a single
mesh but turns the dual vector's second block into a mass-weighted
quantity that is no longer the coefficient vector of any function, so
prolonging it between meshes and measuring it in the A-norm both lose
their meaning; the correction then stalls at first order.
"""
from __future__ import annotations

import time
import weakref
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .assembly import (
    BlockPencil,
    RefractionIndex,
    assemble_matrices,
    build_dofmap,
    build_pencil,
    cell_dofs,
)
from .element import eval_physical_basis
from .eigensolver import (
    SolverOptions,
    SpectrumResult,
    solve_dual,
    solve_primal,
)
from .errors import (
    DegenerateClusterError,
    ProjectionCollapseError,
    QuotientDegenerateError,
)
from .linalg import SpdFactor, cholesky, dense_solve_complex
from .mesh import Domain, Mesh, NestingMap, build_mesh, build_nesting

__all__ = [
    "CoarsePair",
    "TwoGridResult",
    "TwoGridSession",
    "prolongation_matrix",
    "prolongate",
    "project_dual",
    "two_grid_solve",
    "rayleigh_identity_check",
]

_PROLONGATION_CACHE: "weakref.WeakKeyDictionary[NestingMap, sp.csr_matrix]" = (
    weakref.WeakKeyDictionary()
)


def _field_prolongation(nesting: NestingMap) -> sp.csr_matrix:
    """Exact Hermite DOF transfer for one scalar field."""
    coarse, fine, r = nesting.coarse, nesting.fine, nesting.ratio
    dof_c = build_dofmap(coarse)
    dof_f = build_dofmap(fine)
    cdofs = cell_dofs(coarse, dof_c)
    side_c = coarse.side

    # physical (value, d/dx, d/dy, d2/dxdy) rows of all 16 coarse basis
    # functions at each of the (r+1)^2 possible in-cell offsets
    basis = np.empty((r + 1, r + 1, 4, 16))
    for a in range(r + 1):
        for b in range(r + 1):
            xi, eta = a / r, b / r
            basis[a, b] = np.stack([
                eval_physical_basis(xi, eta, side_c, 0, 0),
                eval_physical_basis(xi, eta, side_c, 1, 0),
                eval_physical_basis(xi, eta, side_c, 0, 1),
                eval_physical_basis(xi, eta, side_c, 1, 1),
            ])

    nodes = dof_f.free_nodes
    fi = fine.node_grid[nodes, 0]
    fj = fine.node_grid[nodes, 1]
    gmax = coarse.cell_of_grid.shape[0] - 1
    cx = np.minimum(fi // r, gmax)
    cy = np.minimum(fj // r, gmax)
    # a free fine node can sit on the closure of a dropped coarse cell
    # (re-entrant corner); shift those few into an adjacent kept cell
    for i in np.flatnonzero(coarse.cell_of_grid[cx, cy] < 0):
        for ax, ay in ((cx[i] - 1, cy[i]), (cx[i], cy[i] - 1),
                       (cx[i] - 1, cy[i] - 1)):
            if 0 <= ax and 0 <= ay and coarse.cell_of_grid[ax, ay] >= 0:
                cx[i], cy[i] = ax, ay
                break
    cid = coarse.cell_of_grid[cx, cy]
    a = fi - cx * r
    b = fj - cy * r

    n_nodes = nodes.shape[0]
    gdofs = np.broadcast_to(cdofs[cid][:, None, :], (n_nodes, 4, 16))
    entries = basis[a, b]
    rdofs = np.broadcast_to(
        dof_f.node_dof[nodes][:, :, None], (n_nodes, 4, 16)
    )
    keep = gdofs >= 0  # clamped coarse boundary DOFs contribute nothing
    mat = sp.coo_matrix(
        (entries[keep], (rdofs[keep], gdofs[keep])),
        shape=(dof_f.n_free, dof_c.n_free),
    )
    return mat.tocsr()


def prolongation_matrix(nesting: NestingMap) -> sp.csr_matrix:
    """Prolongation for the stacked two-field vector (cached per nesting)."""
    cached = _PROLONGATION_CACHE.get(nesting)
    if cached is None:
        p1 = _field_prolongation(nesting)
        cached = sp.block_diag([p1, p1], format="csr")
        _PROLONGATION_CACHE[nesting] = cached
    return cached


def prolongate(nesting: NestingMap, coarse_vec: np.ndarray) -> np.ndarray:
    """Lift a stacked coarse coefficient vector to the fine mesh."""
    p = prolongation_matrix(nesting)
    coarse_vec = np.asarray(coarse_vec)
    if coarse_vec.shape != (p.shape[1],):
        raise ValueError(
            f"expected a stacked coarse vector of length {p.shape[1]}, "
            f"got shape {coarse_vec.shape}"
        )
    return p @ coarse_vec


def project_dual(
    pencil: BlockPencil,
    primal: SpectrumResult,
    duals,
    j: int,
):
    """Dual vector projected onto the cluster of the j-th eigenvalue.

    ``j`` is 1-based (the table row index).  Returns (y_star, q_used)
    where y_star is a raw dual coefficient vector, A-normalized.  The
    computation runs in function coefficients (conjugate of raw): solve
    the Gram system of A-inner products over the cluster's dual basis,
    combine, normalize, conjugate back.
    """
    if not 1 <= j <= len(primal.pairs):
        raise ValueError(f"target index {j} outside 1..{len(primal.pairs)}")
    index = j - 1
    cluster = next(c for c in primal.clusters if index in c)
    members = []
    for i in cluster:
        mine = [d for d in duals if d.primal_index == i]
        if len(mine) != 1:
            raise DegenerateClusterError(
                f"cluster member {i + 1} has {len(mine)} dual partners, need 1"
            )
        members.append(mine[0])
    K = pencil.K
    x = primal.pairs[index].x
    coeff = np.column_stack([np.conj(d.y_raw) for d in members])
    gram = coeff.conj().T @ (K @ coeff)
    rhs = coeff.conj().T @ (K @ x)
    beta = dense_solve_complex(gram, rhs)
    combined = coeff @ beta
    norm = float(np.sqrt(np.real(np.conj(combined) @ (K @ combined))))
    if norm <= 1e-12:
        raise ProjectionCollapseError(
            f"projected dual vector vanished for target {j} (A-norm {norm:.3e})"
        )
    return np.conj(combined / norm), len(cluster)


@dataclass(eq=False)
class CoarsePair:
    """Coarse eigenpair plus its projected dual vector."""

    lam: complex
    x: np.ndarray
    y_star: np.ndarray
    q_used: int


@dataclass(eq=False)
class TwoGridResult:
    """Outcome of one two-grid correction."""

    lam: complex
    k: complex
    coarse: CoarsePair
    x_fine: np.ndarray
    y_fine: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    wall_time_s: float = 0.0


class TwoGridSession:
    """Reusable two-grid state for several target indices.

    Builds both meshes, assembles both pencils, factors the fine matrix
    once, and runs the coarse primal and dual eigensolves once; distinct
    target indices then cost two fine banded solves each.
    """

    def __init__(
        self,
        domain: Domain,
        refraction: RefractionIndex,
        n_coarse: int,
        n_fine: int,
        opts: SolverOptions | None = None,
    ):
        self.opts = opts or SolverOptions()
        self.domain = Domain(domain)
        self.refraction = refraction
        self.coarse_mesh = build_mesh(self.domain, n_coarse)
        self.fine_mesh = build_mesh(self.domain, n_fine)
        self.nesting = build_nesting(self.coarse_mesh, self.fine_mesh)
        # mass-block pencils on purpose: see the module docstring
        self.coarse_pencil = build_pencil(
            assemble_matrices(self.coarse_mesh, refraction), identity_trick=False
        )
        self.fine_pencil = build_pencil(
            assemble_matrices(self.fine_mesh, refraction), identity_trick=False
        )
        self.fine_factor: SpdFactor = cholesky(self.fine_pencil.K)
        self.primal: SpectrumResult | None = None
        self.duals = None
        self._nev = 0

    def prepare(self, max_j: int, cluster_margin: int = 3) -> SpectrumResult:
        """Solve the coarse primal and dual problems for targets up to max_j.

        The margin widens the solve window so clusters straddling max_j
        are still detected in full.  Batch drivers should call this once
        with their largest target; when lazy correct() calls grow the
        window one index at a time instead, each re-solve at least doubles
        it so the coarse eigenproblem is not re-run per target.
        """
        n = self.coarse_pencil.K.shape[0]
        nev = min(max_j + cluster_margin, n)
        if self.primal is None or self._nev < nev:
            if self.primal is not None:
                nev = min(max(nev, 2 * self._nev), n)
            self.primal = solve_primal(self.coarse_pencil, nev, self.opts)
            self.duals = solve_dual(
                self.coarse_pencil, nev, self.opts, primal=self.primal
            )
            self._nev = nev
        return self.primal

    def correct(self, j: int) -> TwoGridResult:
        """Run the fine-grid correction for 1-based target index ``j``."""
        t0 = time.perf_counter()
        self.prepare(j)
        pair = self.primal.pairs[j - 1]
        y_star, q_used = project_dual(self.coarse_pencil, self.primal, self.duals, j)
        coarse = CoarsePair(lam=pair.lam, x=pair.x, y_star=y_star, q_used=q_used)

        mc = self.coarse_pencil.M
        b_coarse = complex(y_star @ (mc @ pair.x))

        x_lift = prolongate(self.nesting, pair.x)
        y_lift = prolongate(self.nesting, y_star)
        kf, mf = self.fine_pencil.K, self.fine_pencil.M
        rhs_x = pair.lam * (mf @ x_lift)
        rhs_y = pair.lam * (mf.T @ y_lift)
        x_fine = self.fine_factor.solve(rhs_x)
        y_fine = self.fine_factor.solve(rhs_y)

        denom = complex(y_fine @ (mf @ x_fine))
        scale = np.linalg.norm(x_fine) * np.linalg.norm(y_fine)
        if abs(denom) <= 1e-12 * max(scale, 1e-300):
            raise QuotientDegenerateError(
                f"Rayleigh quotient denominator {abs(denom):.3e} is degenerate "
                f"for target {j}"
            )
        numer = complex(y_fine @ (kf @ x_fine))
        lam = numer / denom
        diagnostics = {
            "coarse_pairing": abs(b_coarse),
            "fine_pairing": abs(denom) / max(scale, 1e-300),
            "solve_residual_x": float(
                np.linalg.norm(kf @ x_fine - rhs_x) / np.linalg.norm(rhs_x)
            ),
            "solve_residual_y": float(
                np.linalg.norm(kf @ y_fine - rhs_y) / np.linalg.norm(rhs_y)
            ),
            "coarse_restarts": self.primal.restarts,
        }
        return TwoGridResult(
            lam=lam,
            k=complex(np.sqrt(lam)),
            coarse=coarse,
            x_fine=x_fine,
            y_fine=y_fine,
            diagnostics=diagnostics,
            wall_time_s=time.perf_counter() - t0,
        )


def two_grid_solve(
    domain: Domain,
    refraction: RefractionIndex,
    n_coarse: int,
    n_fine: int,
    j: int,
    opts: SolverOptions | None = None,
) -> TwoGridResult:
    """One-shot two-grid solve for the 1-based target index ``j``.

    Convenience wrapper over TwoGridSession; batch drivers should hold a
    session so the fine factorization and coarse solves are shared.
    """
    session = TwoGridSession(domain, refraction, n_coarse, n_fine, opts)
    return session.correct(j)


def rayleigh_identity_check(
    pencil: BlockPencil,
    lam: complex,
    x: np.ndarray,
    y_raw: np.ndarray,
    n_samples: int = 20,
    seed: int = 0,
    pairing_floor: float = 1e-8,
) -> float:
    """Largest violation of the Rayleigh-quotient error identity.

    For random (v, v*) the quotient error (v*^T K v)/(v*^T M v) - lambda
    must equal the bilinear-form mismatch of the differences to the exact
    pair, (v*-y)^T (K - lambda M) (v-x) / (v*^T M v).  Samples whose
    pairing v*^T M v is numerically degenerate are redrawn (at most 50
    tries each).
    """
    rng = np.random.default_rng(seed)
    K, M = pencil.K, pencil.M
    n = K.shape[0]
    worst = 0.0
    for _ in range(n_samples):
        for _ in range(50):
            v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            vs = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            b0 = vs @ (M @ v)
            if abs(b0) > pairing_floor * np.linalg.norm(v) * np.linalg.norm(vs):
                break
        else:  # pragma: no cover - astronomically unlikely
            raise QuotientDegenerateError("could not draw a non-degenerate sample")
        lhs = (vs @ (K @ v)) / b0 - lam
        ev = vs - y_raw
        e = v - x
        rhs = (ev @ (K @ e)) / b0 - lam * (ev @ (M @ e)) / b0
        worst = max(worst, abs(lhs - rhs))
    return float(worst)
