"""Structured quadrilateral meshes on the unit square and an L-shaped domain.

Both domains are meshed with axis-aligned square cells of side 1/N.  The
unit square is [0,1]^2; the L-shape is (-1,1)^2 with the closed quadrant
[0,1) x (-1,0] removed, so the re-entrant corner sits at the origin.  Nodes
and cells are enumerated lexicographically by (y, x), which keeps rebuilds
bit-identical and makes nested-mesh index arithmetic exact integer math.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import NestingError

__all__ = [
    "Domain",
    "Mesh",
    "NestingMap",
    "build_mesh",
    "build_nesting",
    "dump_mesh",
]


class Domain(Enum):
    """Supported computational domains."""

    UNIT_SQUARE = "square"
    L_SHAPE = "lshape"


@dataclass(eq=False)
class Mesh:
    """Immutable structured mesh.

    Attributes
    ----------
    domain : Domain
        Which benchmark domain the mesh covers.
    n_subdiv : int
        Number of cells per unit length (cells have side 1/n_subdiv).
    nodes : ndarray, shape (n_nodes, 2)
        Node coordinates, lexicographic by (y, x).
    cells : ndarray, shape (n_cells, 4)
        Corner node ids, counterclockwise from the lower-left corner.
    boundary_mask : ndarray of bool, shape (n_nodes,)
        True for nodes on the domain boundary (including the re-entrant
        edges of the L-shape).
    node_grid, cell_grid : ndarray of int
        Integer grid coordinates (ix, iy) of each node / cell origin.
    node_of_grid, cell_of_grid : ndarray of int
        Inverse lookup tables indexed [ix, iy]; -1 marks positions outside
        the domain.
    """

    domain: Domain
    n_subdiv: int
    nodes: np.ndarray
    cells: np.ndarray
    boundary_mask: np.ndarray
    node_grid: np.ndarray
    cell_grid: np.ndarray
    node_of_grid: np.ndarray
    cell_of_grid: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def side(self) -> float:
        """Side length of every cell."""
        return 1.0 / self.n_subdiv

    @property
    def mesh_size(self) -> float:
        """Reported mesh size h, the cell diagonal sqrt(2)/N."""
        return np.sqrt(2.0) / self.n_subdiv

    @property
    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_mask)

    def cell_origin(self, cell: int) -> np.ndarray:
        """Physical coordinates of a cell's lower-left corner."""
        return self.nodes[self.cells[cell, 0]]


def build_mesh(domain: Domain, n_subdiv: int) -> Mesh:
    """Build the structured mesh for ``domain`` with N = ``n_subdiv``.

    N must be at least 2 so that the mesh has interior nodes.  The L-shape
    grid covers [-1,1]^2 with 2N x 2N candidate cells and drops the N x N
    block whose interiors lie in the removed quadrant.
    """
    domain = Domain(domain)
    if n_subdiv < 2:
        raise ValueError(f"n_subdiv must be >= 2, got {n_subdiv}")
    n = n_subdiv
    if domain is Domain.UNIT_SQUARE:
        g = n + 1            # grid points per axis
        off = 0              # coordinate offset in grid units
        node_kept = np.ones((g, g), dtype=bool)
        cell_kept = np.ones((g - 1, g - 1), dtype=bool)
    else:
        g = 2 * n + 1
        off = n
        ix = np.arange(g)
        node_kept = ~((ix[:, None] > n) & (ix[None, :] < n))
        cx = np.arange(g - 1)
        cell_kept = ~((cx[:, None] >= n) & (cx[None, :] < n))

    # Nodes, lexicographic by (y, x): iterate y-major over kept grid points.
    iy_n, ix_n = np.meshgrid(np.arange(g), np.arange(g), indexing="ij")
    keep = node_kept[ix_n, iy_n]
    ix_kept = ix_n[keep]
    iy_kept = iy_n[keep]
    node_grid = np.column_stack([ix_kept, iy_kept]).astype(np.int64)
    nodes = (node_grid - off) / float(n)

    node_of_grid = np.full((g, g), -1, dtype=np.int64)
    node_of_grid[ix_kept, iy_kept] = np.arange(len(ix_kept))

    # Cells, lexicographic by (y, x), corners CCW from lower-left.
    cy_c, cx_c = np.meshgrid(np.arange(g - 1), np.arange(g - 1), indexing="ij")
    ckeep = cell_kept[cx_c, cy_c]
    cx_kept = cx_c[ckeep]
    cy_kept = cy_c[ckeep]
    cell_grid = np.column_stack([cx_kept, cy_kept]).astype(np.int64)
    cells = np.column_stack([
        node_of_grid[cx_kept, cy_kept],
        node_of_grid[cx_kept + 1, cy_kept],
        node_of_grid[cx_kept + 1, cy_kept + 1],
        node_of_grid[cx_kept, cy_kept + 1],
    ])
    cell_of_grid = np.full((g - 1, g - 1), -1, dtype=np.int64)
    cell_of_grid[cx_kept, cy_kept] = np.arange(len(cx_kept))

    if domain is Domain.UNIT_SQUARE:
        boundary = (
            (ix_kept == 0) | (ix_kept == n) | (iy_kept == 0) | (iy_kept == n)
        )
    else:
        boundary = (
            (ix_kept == 0)
            | (ix_kept == 2 * n)
            | (iy_kept == 0)
            | (iy_kept == 2 * n)
            | ((ix_kept == n) & (iy_kept <= n))
            | ((iy_kept == n) & (ix_kept >= n))
        )

    for arr in (nodes, cells, boundary, node_grid, cell_grid, node_of_grid,
                cell_of_grid):
        arr.setflags(write=False)
    return Mesh(
        domain=domain,
        n_subdiv=n,
        nodes=nodes,
        cells=cells,
        boundary_mask=boundary,
        node_grid=node_grid,
        cell_grid=cell_grid,
        node_of_grid=node_of_grid,
        cell_of_grid=cell_of_grid,
    )


@dataclass(eq=False)
class NestingMap:
    """Correspondence between a coarse mesh and a nested refinement.

    ``cell_children[c]`` lists the ratio^2 fine cells covering coarse cell
    ``c``.  The ratio is the (integer) subdivision quotient; ratio 1 maps a
    mesh onto itself.
    """

    coarse: Mesh
    fine: Mesh
    ratio: int
    cell_children: np.ndarray


def build_nesting(coarse: Mesh, fine: Mesh) -> NestingMap:
    """Check that ``fine`` refines ``coarse`` and build the cell map.

    Raises NestingError when the domains differ or the subdivision counts
    are not an integer multiple of each other.
    """
    if coarse.domain is not fine.domain:
        raise NestingError(
            f"domains differ: {coarse.domain.value} vs {fine.domain.value}"
        )
    if fine.n_subdiv % coarse.n_subdiv != 0:
        raise NestingError(
            f"fine N={fine.n_subdiv} is not a multiple of coarse N="
            f"{coarse.n_subdiv}"
        )
    r = fine.n_subdiv // coarse.n_subdiv
    n_coarse = coarse.n_cells
    children = np.empty((n_coarse, r * r), dtype=np.int64)
    offs = np.arange(r)
    for c in range(n_coarse):
        cx, cy = coarse.cell_grid[c]
        fx = cx * r + offs
        fy = cy * r + offs
        ids = fine.cell_of_grid[np.ix_(fx, fy)]
        if np.any(ids < 0):
            raise NestingError(f"coarse cell {c} has missing fine children")
        # flatten y-major to keep child order lexicographic by (y, x)
        children[c] = ids.T.ravel()
    children.setflags(write=False)
    return NestingMap(coarse=coarse, fine=fine, ratio=r, cell_children=children)


def dump_mesh(mesh: Mesh, path) -> None:
    """Write a plain-text node/cell listing for debugging.

    One node per line (index, x, y, is_boundary flag), then one cell per
    line (index followed by its four corner node ids).
    """
    with open(path, "w") as fh:
        fh.write(f"# nodes {mesh.n_nodes}\n")
        for i in range(mesh.n_nodes):
            x, y = mesh.nodes[i]
            fh.write(f"{i} {x:.17g} {y:.17g} {int(mesh.boundary_mask[i])}\n")
        fh.write(f"# cells {mesh.n_cells}\n")
        for c in range(mesh.n_cells):
            a, b, d, e = mesh.cells[c]
            fh.write(f"{c} {a} {b} {d} {e}\n")
