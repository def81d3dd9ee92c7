r"""Assembly of the transmission-eigenvalue block pencil.

The quadratic eigenproblem for the interior transmission eigenvalue
lambda = k^2 is linearized with the auxiliary field w = lambda*u, giving a
generalized problem K x = lambda M x for the stacked coefficient vector
x = (u, w).  With the scalar basis {xi_i} of the clamped (H^2_0-conforming)
Hermite space, the blocks are built from four sparse matrices:

    stiffness[l,i]      = int 1/(n-1) * lap(xi_i) * lap(xi_l)
    coupling[l,i]       = -int { 1/(n-1) xi_i lap(xi_l)
                                 + lap(xi_i) 1/(n-1) xi_l
                                 - grad(xi_i).grad(xi_l) }
    weighted_mass[l,i]  = -int n/(n-1) xi_i xi_l
    mass[l,i]           = int xi_i xi_l

and K = diag(stiffness, mass), M = [[coupling, weighted_mass], [mass, 0]].
For affine n the coupling matrix uses the equivalent gradient form
int grad(xi_i/(n-1)).grad(xi_l) + grad(xi_i).grad(n*xi_l/(n-1)) so that no
second derivative of 1/(n-1) is needed.  The optional identity trick swaps
every mass block for the identity, which rescales the auxiliary equation
w = lambda*u without changing the spectrum but keeps K well conditioned.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .element import ShapeTable, map_derivatives, shape_table, eval_physical_basis
from .errors import ModelError
from .mesh import Domain, Mesh

__all__ = [
    "RefractionIndex",
    "DofMap",
    "AssembledForms",
    "BlockPencil",
    "build_dofmap",
    "cell_dofs",
    "assemble_matrices",
    "build_pencil",
    "evaluate_forms",
    "evaluate_field",
    "write_matrix_market",
    "export_matrix_market",
]


@dataclass(frozen=True)
class RefractionIndex:
    """Refraction index n(x, y) = c0 + c1*x + c2*y.

    Constant indices are the c1 = c2 = 0 case.  The model requires
    inf n > 1 over the closed domain, checked in :func:`assemble_matrices`.
    """

    c0: float
    c1: float = 0.0
    c2: float = 0.0

    @classmethod
    def constant(cls, value: float) -> "RefractionIndex":
        return cls(float(value), 0.0, 0.0)

    @classmethod
    def affine(cls, c0: float, c1: float, c2: float) -> "RefractionIndex":
        return cls(float(c0), float(c1), float(c2))

    @property
    def is_constant(self) -> bool:
        return self.c1 == 0.0 and self.c2 == 0.0

    def __call__(self, x, y):
        return self.c0 + self.c1 * np.asarray(x) + self.c2 * np.asarray(y)

    def validate_on(self, mesh: Mesh) -> None:
        """Check inf n > 1 at all cell corners and centers (strict)."""
        corners = mesh.nodes[mesh.cells.reshape(-1)]
        centers = mesh.nodes[mesh.cells[:, 0]] + 0.5 * mesh.side
        pts = np.vstack([corners, centers])
        nmin = float(np.min(self(pts[:, 0], pts[:, 1])))
        if not nmin > 1.0 + 1e-12:
            raise ModelError(
                f"refraction index must satisfy inf n > 1, found min {nmin:.6g}"
            )


@dataclass(eq=False)
class DofMap:
    """Scalar-field DOF numbering with clamped boundary.

    All four DOF kinds of every boundary node are eliminated; interior
    nodes get consecutive indices ordered by node id then kind.  The
    stacked vector of the linearized problem holds field u in
    [0, n_free) and the auxiliary field in [n_free, 2*n_free).
    """

    node_dof: np.ndarray
    free_nodes: np.ndarray
    n_free: int


def build_dofmap(mesh: Mesh) -> DofMap:
    interior = ~mesh.boundary_mask
    free_nodes = np.flatnonzero(interior)
    node_dof = np.full((mesh.n_nodes, 4), -1, dtype=np.int64)
    node_dof[free_nodes] = np.arange(4 * len(free_nodes), dtype=np.int64).reshape(-1, 4)
    node_dof.setflags(write=False)
    free_nodes.setflags(write=False)
    return DofMap(node_dof=node_dof, free_nodes=free_nodes, n_free=4 * len(free_nodes))


def cell_dofs(mesh: Mesh, dofmap: DofMap) -> np.ndarray:
    """Global scalar DOF (or -1) for each local basis index, per cell.

    Shape (n_cells, 16); local index b = 4*corner + kind matches the
    element module's basis ordering.
    """
    return dofmap.node_dof[mesh.cells].reshape(mesh.n_cells, 16)


@dataclass(eq=False)
class AssembledForms:
    """The four scalar-field matrices entering the block pencil (CSC)."""

    stiffness: sp.csc_matrix
    coupling: sp.csc_matrix
    weighted_mass: sp.csc_matrix
    mass: sp.csc_matrix
    n_free: int


def _scatter(loc: np.ndarray, dofs: np.ndarray, n_free: int) -> sp.csc_matrix:
    """Sum local (n_cells, 16, 16) blocks into a global CSC matrix."""
    rows = np.broadcast_to(dofs[:, :, None], loc.shape)
    cols = np.broadcast_to(dofs[:, None, :], loc.shape)
    keep = (rows >= 0) & (cols >= 0)
    mat = sp.coo_matrix(
        (loc[keep], (rows[keep], cols[keep])), shape=(n_free, n_free)
    )
    return mat.tocsc()


def assemble_matrices(
    mesh: Mesh,
    refraction: RefractionIndex,
    quad_order: int | None = None,
    table: ShapeTable | None = None,
) -> AssembledForms:
    """Assemble the four scalar-field matrices on ``mesh``.

    Parameters
    ----------
    mesh : Mesh
    refraction : RefractionIndex
        Validated against inf n > 1 before any work is done.
    quad_order : int, optional
        1-D Gauss order.  Defaults to 4 for constant n (exact for the
        bicubic integrands) and 5 for affine n.
    table : ShapeTable, optional
        Reuse a pre-tabulated shape table (its order wins over quad_order).
    """
    refraction.validate_on(mesh)
    if table is None:
        if quad_order is None:
            quad_order = 4 if refraction.is_constant else 5
        table = shape_table(quad_order)
    phys = map_derivatives(table, mesh.side)
    dofmap = build_dofmap(mesh)
    dofs = cell_dofs(mesh, dofmap)
    w = phys.weights
    phi = phys.phi
    lap = phys.phi_xx + phys.phi_yy
    gx = phys.phi_x
    gy = phys.phi_y

    d_loc = np.einsum("q,ql,qi->li", w, phi, phi)
    if refraction.is_constant:
        inv = 1.0 / (refraction.c0 - 1.0)
        nn = refraction.c0 * inv
        a_loc = inv * np.einsum("q,ql,qi->li", w, lap, lap)
        c_loc = -nn * d_loc
        grad = np.einsum("q,ql,qi->li", w, gx, gx) + np.einsum(
            "q,ql,qi->li", w, gy, gy
        )
        b_loc = -(
            inv * np.einsum("q,ql,qi->li", w, lap, phi)
            + inv * np.einsum("q,ql,qi->li", w, phi, lap)
            - grad
        )
        ncells = mesh.n_cells
        locs = (
            np.broadcast_to(a_loc, (ncells, 16, 16)),
            np.broadcast_to(b_loc, (ncells, 16, 16)),
            np.broadcast_to(c_loc, (ncells, 16, 16)),
            np.broadcast_to(d_loc, (ncells, 16, 16)),
        )
    else:
        origins = mesh.nodes[mesh.cells[:, 0]]
        qx = origins[:, 0:1] + mesh.side * phys.points[None, :, 0]
        qy = origins[:, 1:2] + mesh.side * phys.points[None, :, 1]
        nval = refraction(qx, qy)
        inv = 1.0 / (nval - 1.0)
        a_loc = np.einsum("cq,q,ql,qi->cli", inv, w, lap, lap, optimize=True)
        c_loc = -np.einsum("cq,q,ql,qi->cli", nval * inv, w, phi, phi, optimize=True)
        # gradient form of the coupling matrix; grad n = (c1, c2) is constant
        wgt = (nval + 1.0) * inv * w
        b_loc = np.einsum("cq,ql,qi->cli", wgt, gx, gx, optimize=True)
        b_loc += np.einsum("cq,ql,qi->cli", wgt, gy, gy, optimize=True)
        invsq = inv * inv
        for cgrad, g in ((refraction.c1, gx), (refraction.c2, gy)):
            if cgrad == 0.0:
                continue
            cross = np.einsum(
                "cq,ql,qi->cli", cgrad * invsq * w, g, phi, optimize=True
            )
            b_loc -= cross + cross.transpose(0, 2, 1)
        locs = (
            a_loc,
            b_loc,
            c_loc,
            np.broadcast_to(d_loc, (mesh.n_cells, 16, 16)),
        )

    a, b, c, d = (_scatter(loc, dofs, dofmap.n_free) for loc in locs)
    # stiffness, weighted mass and mass are symmetric bilinear forms; force
    # exact symmetry so K == K^T holds bit-for-bit after block assembly
    a = ((a + a.T) * 0.5).tocsc()
    c = ((c + c.T) * 0.5).tocsc()
    d = ((d + d.T) * 0.5).tocsc()
    return AssembledForms(
        stiffness=a, coupling=b, weighted_mass=c, mass=d, n_free=dofmap.n_free
    )


@dataclass(eq=False)
class BlockPencil:
    """Linearized block pencil K x = lambda M x (CSC blocks).

    K is symmetric positive definite; with identity_trick the mass blocks
    of both K and M are replaced by the identity, which leaves the
    spectrum unchanged.
    """

    K: sp.csc_matrix
    M: sp.csc_matrix
    n_free: int
    identity_trick: bool


def build_pencil(forms: AssembledForms, identity_trick: bool = True) -> BlockPencil:
    """Assemble K and M from the scalar-field matrices."""
    n = forms.n_free
    d_block = sp.identity(n, format="csc") if identity_trick else forms.mass
    K = sp.block_diag([forms.stiffness, d_block], format="csc")
    M = sp.bmat(
        [[forms.coupling, forms.weighted_mass], [d_block, None]], format="csc"
    )
    return BlockPencil(K=K, M=M, n_free=n, identity_trick=identity_trick)


def evaluate_forms(pencil: BlockPencil, x: np.ndarray, y_raw: np.ndarray):
    """Bilinear form values (y^T K x, y^T M x) without conjugation.

    ``y_raw`` is a raw dual coefficient vector; the pairing is the plain
    transpose pairing, which is the one the two-grid Rayleigh quotient and
    its error identity are built on.
    """
    x = np.asarray(x)
    y = np.asarray(y_raw)
    nsys = pencil.K.shape[0]
    if x.shape != (nsys,) or y.shape != (nsys,):
        raise ValueError(
            f"expected vectors of length {nsys}, got {x.shape} and {y.shape}"
        )
    return y @ (pencil.K @ x), y @ (pencil.M @ x)


def evaluate_field(
    mesh: Mesh,
    dofmap: DofMap,
    coeffs: np.ndarray,
    points: np.ndarray,
    dx: int = 0,
    dy: int = 0,
):
    """Evaluate a scalar FE field (or derivative) at physical points.

    ``coeffs`` has length n_free (one scalar field); eliminated boundary
    DOFs are treated as zero.  Points must lie in the closed domain.
    Mainly a testing and diagnostics helper, so it loops over points.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    coeffs = np.asarray(coeffs)
    if coeffs.shape != (dofmap.n_free,):
        raise ValueError(f"expected {dofmap.n_free} coefficients")
    n = mesh.n_subdiv
    off = 0 if mesh.domain is Domain.UNIT_SQUARE else n
    gmax = mesh.cell_of_grid.shape[0] - 1
    dofs = cell_dofs(mesh, dofmap)
    out = np.zeros(len(pts), dtype=coeffs.dtype)
    for p, (x, y) in enumerate(pts):
        u = x * n + off
        v = y * n + off
        cx = min(max(int(np.floor(u)), 0), gmax)
        cy = min(max(int(np.floor(v)), 0), gmax)
        cid = mesh.cell_of_grid[cx, cy]
        if cid < 0:
            for ax, ay in ((cx - 1, cy), (cx, cy - 1), (cx - 1, cy - 1)):
                if 0 <= ax <= gmax and 0 <= ay <= gmax and mesh.cell_of_grid[ax, ay] >= 0:
                    cx, cy = ax, ay
                    cid = mesh.cell_of_grid[cx, cy]
                    break
        if cid < 0:
            raise ValueError(f"point {(x, y)} lies outside the domain")
        basis = eval_physical_basis(u - cx, v - cy, mesh.side, dx, dy)
        local = dofs[cid]
        mask = local >= 0
        out[p] = basis[mask] @ coeffs[local[mask]]
    return out if np.asarray(points).ndim > 1 else out[0]


def write_matrix_market(matrix: sp.spmatrix, path) -> None:
    """Write a sparse matrix in MatrixMarket coordinate format.

    General real coordinate format, 1-based indices, 17 significant digits
    so values round-trip float64 exactly.  Entries are emitted in CSC
    order, which keeps repeated exports byte-identical.
    """
    m = matrix.tocsc()
    m.sort_indices()
    coo = m.tocoo()
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{m.shape[0]} {m.shape[1]} {coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r + 1} {c + 1} {v:.17g}\n")


def export_matrix_market(pencil: BlockPencil, path_prefix) -> tuple[str, str]:
    """Write the pencil as <prefix>_K.mtx and <prefix>_M.mtx."""
    k_path = f"{path_prefix}_K.mtx"
    m_path = f"{path_prefix}_M.mtx"
    write_matrix_market(pencil.K, k_path)
    write_matrix_market(pencil.M, m_path)
    return k_path, m_path
