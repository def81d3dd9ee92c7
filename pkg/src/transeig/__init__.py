"""Finite-element computation of Helmholtz transmission eigenvalues.

The package discretizes the fourth-order reformulation of the interior
transmission eigenvalue problem with bicubic Hermite rectangles on the
unit square and an L-shaped domain, linearizes the quadratic dependence
on lambda = k^2 into a block pencil, and computes the smallest
eigenvalues either directly on a fine mesh or through a two-grid
correction that combines a coarse eigensolve with one fine linear solve
per eigenvalue.
"""

from .mesh import Domain, Mesh, NestingMap, build_mesh, build_nesting, dump_mesh
from .element import ShapeTable, shape_table, map_derivatives
from .assembly import (
    AssembledForms,
    BlockPencil,
    DofMap,
    RefractionIndex,
    assemble_matrices,
    build_dofmap,
    build_pencil,
    evaluate_field,
    evaluate_forms,
    export_matrix_market,
)
from .eigensolver import (
    DualPair,
    EigenPair,
    SolverOptions,
    SpectrumResult,
    estimate_clusters,
    solve_dual,
    solve_primal,
)
from .twogrid import (
    CoarsePair,
    TwoGridResult,
    TwoGridSession,
    project_dual,
    prolongate,
    prolongation_matrix,
    rayleigh_identity_check,
    two_grid_solve,
)
from . import errors

__version__ = "0.1.0"

__all__ = [
    "Domain",
    "Mesh",
    "NestingMap",
    "build_mesh",
    "build_nesting",
    "dump_mesh",
    "ShapeTable",
    "shape_table",
    "map_derivatives",
    "AssembledForms",
    "BlockPencil",
    "DofMap",
    "RefractionIndex",
    "assemble_matrices",
    "build_dofmap",
    "build_pencil",
    "evaluate_field",
    "evaluate_forms",
    "export_matrix_market",
    "DualPair",
    "EigenPair",
    "SolverOptions",
    "SpectrumResult",
    "estimate_clusters",
    "solve_dual",
    "solve_primal",
    "CoarsePair",
    "TwoGridResult",
    "TwoGridSession",
    "project_dual",
    "prolongate",
    "prolongation_matrix",
    "rayleigh_identity_check",
    "two_grid_solve",
    "errors",
]
