r"""Bicubic Hermite rectangle element (the classical C^1 plate element).

The reference cell is [0,1]^2.  Each corner carries four degrees of
freedom: function value, the two first derivatives, and the mixed second
derivative.  The 16 shape functions are tensor products of the 1-D cubic
Hermite functions

    h00(t) = 1 - 3t^2 + 2t^3      (value at t=0)
    h10(t) = t - 2t^2 + t^3       (slope at t=0)
    h01(t) = 3t^2 - 2t^3          (value at t=1)
    h11(t) = t^3 - t^2            (slope at t=1)

Basis index b = 4*corner + kind with corners counterclockwise from the
lower-left, kinds ordered (value, d/dx, d/dy, d2/dxdy).  On a physical cell
of side s the derivative-kind DOFs are scaled by s (mixed by s^2) so that
assembled global DOFs are plain physical derivatives at the nodes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "VALUE",
    "DX",
    "DY",
    "DXY",
    "CORNERS",
    "ShapeTable",
    "PhysicalShapeTable",
    "gauss_points_01",
    "eval_reference_basis",
    "eval_physical_basis",
    "dof_scales",
    "shape_table",
    "map_derivatives",
]

VALUE, DX, DY, DXY = range(4)

# corner coordinates on the reference cell, CCW from lower-left
CORNERS = ((0, 0), (1, 0), (1, 1), (0, 1))


def _hermite_1d(t: np.ndarray, deriv: int) -> np.ndarray:
    """Evaluate the four 1-D Hermite cubics (or a derivative) at ``t``.

    Returns an array (..., 4) with columns ordered
    (value@0, slope@0, value@1, slope@1).
    """
    t = np.asarray(t, dtype=float)
    if deriv == 0:
        cols = (
            1.0 - 3.0 * t**2 + 2.0 * t**3,
            t - 2.0 * t**2 + t**3,
            3.0 * t**2 - 2.0 * t**3,
            t**3 - t**2,
        )
    elif deriv == 1:
        cols = (
            6.0 * t**2 - 6.0 * t,
            1.0 - 4.0 * t + 3.0 * t**2,
            6.0 * t - 6.0 * t**2,
            3.0 * t**2 - 2.0 * t,
        )
    elif deriv == 2:
        cols = (
            12.0 * t - 6.0,
            6.0 * t - 4.0,
            6.0 - 12.0 * t,
            6.0 * t - 2.0,
        )
    else:
        raise ValueError(f"derivative order must be 0, 1 or 2, got {deriv}")
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def eval_reference_basis(xi, eta, dxi: int = 0, deta: int = 0) -> np.ndarray:
    """All 16 shape functions (or a derivative) at reference points.

    ``xi``/``eta`` broadcast together; the result has shape (..., 16) with
    the trailing axis ordered by basis index b = 4*corner + kind.
    """
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    hx_val = _hermite_1d(xi, dxi)
    hy_val = _hermite_1d(eta, deta)
    out = np.empty(np.broadcast_shapes(xi.shape, eta.shape) + (16,))
    for corner, (cx, cy) in enumerate(CORNERS):
        for kind in range(4):
            # slope-flavoured 1-D factor along x for DX/DXY kinds, along y
            # for DY/DXY kinds; value-flavoured otherwise
            ix = 2 * cx + (1 if kind in (DX, DXY) else 0)
            iy = 2 * cy + (1 if kind in (DY, DXY) else 0)
            out[..., 4 * corner + kind] = hx_val[..., ix] * hy_val[..., iy]
    return out


def dof_scales(side: float) -> np.ndarray:
    """Per-basis DOF scaling for a cell of side ``side``.

    Value DOFs are unscaled, first-derivative DOFs carry a factor s and the
    mixed-derivative DOF s^2, so that local coefficients are physical nodal
    derivatives.
    """
    s = float(side)
    return np.tile([1.0, s, s, s * s], 4)


def eval_physical_basis(xi, eta, side: float, dx: int = 0, dy: int = 0) -> np.ndarray:
    """Physical-derivative values of the scaled basis at reference points.

    Combines the reference derivative, the chain-rule factor 1/side per
    differentiation order, and the DOF scaling, so results multiply local
    coefficient vectors of physical nodal derivatives directly.
    """
    ref = eval_reference_basis(xi, eta, dx, dy)
    return ref * dof_scales(side) / float(side) ** (dx + dy)


def gauss_points_01(order: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on [0,1] (exact to degree 2*order-1)."""
    if order < 1:
        raise ValueError(f"quadrature order must be positive, got {order}")
    pts, wts = np.polynomial.legendre.leggauss(order)
    return 0.5 * (pts + 1.0), 0.5 * wts


@dataclass(eq=False)
class ShapeTable:
    """Reference-cell basis values tabulated at tensor Gauss points.

    weights sum to 1 (the reference cell measure); phi and the derivative
    tables have shape (n_quad, 16).
    """

    quad_order: int
    points: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    phi_xi: np.ndarray
    phi_eta: np.ndarray
    phi_xixi: np.ndarray
    phi_etaeta: np.ndarray


def shape_table(quad_order: int) -> ShapeTable:
    """Tabulate the basis at a tensor Gauss rule of the given 1-D order.

    Orders below 4 cannot integrate products of bicubics exactly and are
    rejected.
    """
    if quad_order < 4:
        raise ValueError(f"quad_order must be >= 4, got {quad_order}")
    t, w = gauss_points_01(quad_order)
    xi = np.repeat(t, quad_order)
    eta = np.tile(t, quad_order)
    weights = np.repeat(w, quad_order) * np.tile(w, quad_order)
    points = np.column_stack([xi, eta])
    table = ShapeTable(
        quad_order=quad_order,
        points=points,
        weights=weights,
        phi=eval_reference_basis(xi, eta, 0, 0),
        phi_xi=eval_reference_basis(xi, eta, 1, 0),
        phi_eta=eval_reference_basis(xi, eta, 0, 1),
        phi_xixi=eval_reference_basis(xi, eta, 2, 0),
        phi_etaeta=eval_reference_basis(xi, eta, 0, 2),
    )
    for arr in (table.points, table.weights, table.phi, table.phi_xi,
                table.phi_eta, table.phi_xixi, table.phi_etaeta):
        arr.setflags(write=False)
    return table


@dataclass(eq=False)
class PhysicalShapeTable:
    """Shape table mapped to a physical cell of side ``side``.

    All arrays include the DOF scaling, derivatives are with respect to
    physical coordinates, and ``weights`` carry the cell Jacobian side^2.
    """

    side: float
    points: np.ndarray
    weights: np.ndarray
    phi: np.ndarray
    phi_x: np.ndarray
    phi_y: np.ndarray
    phi_xx: np.ndarray
    phi_yy: np.ndarray


def map_derivatives(table: ShapeTable, cell_side: float) -> PhysicalShapeTable:
    """Map a reference shape table to a physical cell of side ``cell_side``."""
    s = float(cell_side)
    if not s > 0.0:
        raise ValueError(f"cell_side must be positive, got {cell_side}")
    scale = dof_scales(s)
    phys = PhysicalShapeTable(
        side=s,
        points=table.points,
        weights=table.weights * s * s,
        phi=table.phi * scale,
        phi_x=table.phi_xi * scale / s,
        phi_y=table.phi_eta * scale / s,
        phi_xx=table.phi_xixi * scale / (s * s),
        phi_yy=table.phi_etaeta * scale / (s * s),
    )
    for arr in (phys.weights, phys.phi, phys.phi_x, phys.phi_y, phys.phi_xx,
                phys.phi_yy):
        arr.setflags(write=False)
    return phys
