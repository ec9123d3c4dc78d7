"""Bilinear-element building blocks shared by the cell and interface solvers.

Everything here lives on uniform square grids.  Element matrices are
integrated exactly (2x2 Gauss, which is exact for products of bilinear
shape-function derivatives); coefficients are one constant matrix per cell.
Energies are written as quadratic forms u^T K u, so the stationarity system
of u^T K u + 2 c^T u is K u = -c.
"""

from __future__ import annotations

import inspect

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import InputError, SolverError

__all__ = [
    "KXX", "KYY", "KXY", "MASS_REF", "GRAD_INT",
    "element_stiffness", "cell_node_ids_box", "cell_node_ids_torus",
    "assemble_from_elements", "gradient_load",
    "periodic_stiffness_1d", "gradient_load_1d",
    "box_stiffness_1d", "box_gradient_load_1d",
    "cg_solve",
]

# Local node order within a cell: (0,0), (1,0), (0,1), (1,1) in axis offsets;
# global node id = i * n_y + j for an (n_x, n_y) node array.
_OFFSETS = np.array([[0, 0], [1, 0], [0, 1], [1, 1]])


def _reference_matrices():
    g = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
    pts = np.array([(x, y) for x in g for y in g])
    wts = np.full(4, 0.25)

    def shapes(x, y):
        return np.array([(1 - x) * (1 - y), x * (1 - y), (1 - x) * y, x * y])

    def dshapes(x, y):
        dx = np.array([-(1 - y), (1 - y), -y, y])
        dy = np.array([-(1 - x), -x, (1 - x), x])
        return dx, dy

    kxx = np.zeros((4, 4))
    kyy = np.zeros((4, 4))
    kxy = np.zeros((4, 4))
    mass = np.zeros((4, 4))
    for (x, y), w in zip(pts, wts):
        phi = shapes(x, y)
        dx, dy = dshapes(x, y)
        kxx += w * np.outer(dx, dx)
        kyy += w * np.outer(dy, dy)
        kxy += w * np.outer(dx, dy)
        mass += w * np.outer(phi, phi)
    return kxx, kyy, kxy, mass


KXX, KYY, KXY, MASS_REF = _reference_matrices()

# Integral of each shape-function gradient over the unit square.
GRAD_INT = 0.5 * np.array([[-1.0, -1.0], [1.0, -1.0], [-1.0, 1.0], [1.0, 1.0]])


def element_stiffness(coeff_cells):
    """Per-cell 4x4 matrices of int (A grad phi_j) . grad phi_i.

    coeff_cells has shape (..., 2, 2) (symmetrized here) or (...,) for scalar
    coefficients.  Side-length independent in two dimensions.
    """
    a = np.asarray(coeff_cells, dtype=float)
    if a.ndim >= 2 and a.shape[-2:] == (2, 2):
        a = 0.5 * (a + np.swapaxes(a, -1, -2))
        return (np.multiply.outer(a[..., 0, 0], KXX)
                + np.multiply.outer(a[..., 1, 1], KYY)
                + np.multiply.outer(a[..., 0, 1], KXY + KXY.T))
    return np.multiply.outer(a, KXX + KYY)


def cell_node_ids_box(node_shape):
    """(n_cells, 4) global node ids for a non-periodic grid."""
    nx, ny = node_shape
    i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
    base = np.stack([i.ravel(), j.ravel()], axis=-1)
    corners = base[:, None, :] + _OFFSETS[None, :, :]
    return corners[..., 0] * ny + corners[..., 1]


def cell_node_ids_torus(n):
    """(n*n, 4) global node ids on the n x n periodic lattice."""
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    base = np.stack([i.ravel(), j.ravel()], axis=-1)
    corners = (base[:, None, :] + _OFFSETS[None, :, :]) % n
    return corners[..., 0] * n + corners[..., 1]


def assemble_from_elements(element_mats, cell_nodes, n_nodes):
    """Sum per-cell 4x4 matrices into a global sparse CSR matrix."""
    ke = np.asarray(element_mats, dtype=float).reshape(-1, 4, 4)
    rows = np.repeat(cell_nodes, 4, axis=1).ravel()
    cols = np.tile(cell_nodes, (1, 4)).ravel()
    mat = sp.coo_matrix((ke.ravel(), (rows, cols)), shape=(n_nodes, n_nodes))
    return mat.tocsr()


def gradient_load(p_cells, cell_nodes, n_nodes, spacing):
    """Assemble c_i = sum_cells spacing * p_c . int grad phi_i.

    This is the linear term of the energy sum_c int (A (xi + grad u)) quadratic
    expansions: c_i with p_c = A_c xi, so the solve is K u = -c.
    """
    p = np.asarray(p_cells, dtype=float).reshape(-1, 2)
    contrib = spacing * p @ GRAD_INT.T
    out = np.zeros(n_nodes)
    np.add.at(out, cell_nodes.ravel(), contrib.ravel())
    return out


def periodic_stiffness_1d(a_cells, spacing):
    """Periodic P1 stiffness on the unit circle, one coefficient per cell."""
    a = np.asarray(a_cells, dtype=float)
    n = a.size
    k = a / spacing
    idx = np.arange(n)
    nxt = (idx + 1) % n
    rows = np.concatenate([idx, nxt, idx, nxt])
    cols = np.concatenate([idx, nxt, nxt, idx])
    vals = np.concatenate([k, k, -k, -k])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


def gradient_load_1d(p_cells):
    """1D analogue of gradient_load: c_i = sum_c p_c * int phi_i'."""
    p = np.asarray(p_cells, dtype=float)
    n = p.size
    out = np.zeros(n)
    idx = np.arange(n)
    np.add.at(out, idx, -p)
    np.add.at(out, (idx + 1) % n, p)
    return out


def box_stiffness_1d(a_cells, spacing):
    """Non-periodic P1 stiffness on a 1D interval, nodes = cells + 1."""
    a = np.asarray(a_cells, dtype=float)
    n = a.size
    k = a / spacing
    left = np.arange(n)
    right = left + 1
    rows = np.concatenate([left, right, left, right])
    cols = np.concatenate([left, right, right, left])
    vals = np.concatenate([k, k, -k, -k])
    return sp.coo_matrix((vals, (rows, cols)), shape=(n + 1, n + 1)).tocsr()


def box_gradient_load_1d(p_cells):
    """Interval analogue of gradient_load_1d (no wrap)."""
    p = np.asarray(p_cells, dtype=float)
    out = np.zeros(p.size + 1)
    out[:-1] -= p
    out[1:] += p
    return out


_CG_TOL_KW = "rtol" if "rtol" in inspect.signature(cg).parameters else "tol"


def cg_solve(matrix, rhs, *, rtol=1e-10, maxiter=None, label="linear solve"):
    """Jacobi-preconditioned conjugate gradient with a verified residual.

    Works for singular-but-consistent periodic systems too (rhs orthogonal
    to constants).  Raises a solver error reporting the achieved relative
    residual when the target is missed.
    """
    rhs = np.asarray(rhs, dtype=float)
    norm_b = float(np.linalg.norm(rhs))
    if norm_b == 0.0:
        return np.zeros_like(rhs), 0, 0.0
    n = rhs.size
    if maxiter is None:
        maxiter = 500 + 40 * int(np.sqrt(n))
    diag = matrix.diagonal()
    if np.any(diag <= 0):
        raise InputError(f"{label}: operator diagonal is not positive, "
                         "coefficient field is not elliptic on this grid")
    precond = sp.diags(1.0 / diag)
    iters = [0]

    def count(_):
        iters[0] += 1

    x, info = cg(matrix, rhs, M=precond, maxiter=maxiter,
                 callback=count, atol=0.0, **{_CG_TOL_KW: rtol})
    residual = float(np.linalg.norm(matrix @ x - rhs)) / norm_b
    if info != 0 or residual > rtol:
        raise SolverError(f"{label}: conjugate gradient did not reach relative "
                          f"residual {rtol:g} within {iters[0]} iterations "
                          f"(achieved {residual:.3e})")
    return x, iters[0], residual
