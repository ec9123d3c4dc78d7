"""Cube averaging and the two estimate checks built on it.

The averaging window is a centered cube whose side is an even multiple of
the grid spacing, so its faces land on nodes and the sliding mean is the
composite midpoint rule over whole cells.  The two checks evaluate both
sides of their inequality on explicit fields; the abstract constants are
calibrated empirically and frozen by the test suite.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError, SolverError
from .geometry import BoxGrid
from .cell_problems import solve_h_hom

__all__ = [
    "AveragingReport",
    "cube_average",
    "average_valid_mask",
    "check_shift_poincare",
    "check_hom_lower_bound",
    "effective_matrix",
    "calibrate_poincare_constant",
    "calibrate_window_factor",
]

AVERAGING_CSV_FIELDS = ("label", "r", "lhs", "rhs", "ratio", "holds")


@dataclass(frozen=True)
class AveragingReport:
    """Both sides of one averaging estimate plus the verdict."""

    label: str
    r: float
    lhs: float
    rhs: float
    ratio: float
    constant: float
    holds: bool

    def csv_row(self):
        return {"label": self.label, "r": self.r, "lhs": self.lhs,
                "rhs": self.rhs, "ratio": self.ratio,
                "holds": int(self.holds)}


def _window_cells(grid, r):
    spacing = grid.spacing
    if r < spacing - 1e-12:
        raise InputError(
            f"window side {r} must be at least the grid spacing {spacing}")
    ratio = r / spacing
    k2 = int(round(ratio))
    if abs(ratio - k2) > 1e-9 or k2 % 2 != 0:
        raise InputError(
            f"window side {r} must be an even multiple of the spacing "
            f"{spacing} so its faces land on nodes")
    return k2


def average_valid_mask(grid, r):
    """Nodes whose centered r-window lies inside the grid."""
    k2 = _window_cells(grid, r)
    half = k2 // 2
    masks = []
    for m in grid.n_cells:
        line = np.zeros(m + 1, dtype=bool)
        if m + 1 > 2 * half:
            line[half:m + 1 - half] = True
        masks.append(line)
    if grid.dimension == 1:
        return masks[0]
    return masks[0][:, None] & masks[1][None, :]


def cube_average(grid, values, r):
    """Sliding mean over the centered cube of side r, midpoint quadrature.

    Returns a nodal array; entries whose window does not fit inside the grid
    are NaN (see average_valid_mask).  Input values are nodal; the window
    integral samples the interpolant at cell midpoints.
    """
    if not isinstance(grid, BoxGrid):
        raise InputError("cube_average expects a BoxGrid")
    vals = np.asarray(values, dtype=float).reshape(grid.node_shape)
    if not np.isfinite(vals).all():
        raise InputError("field must be finite")
    k2 = _window_cells(grid, r)
    half = k2 // 2
    mask = average_valid_mask(grid, r)
    if not mask.any():
        raise InputError(
            f"window side {r} leaves no interior node with full margin")

    mids = vals
    for axis in range(vals.ndim):
        lo = mids.take(range(mids.shape[axis] - 1), axis)
        hi = mids.take(range(1, mids.shape[axis]), axis)
        mids = 0.5 * (lo + hi)
    # box sums of cell-midpoint samples via cumulative sums per axis
    sums = mids
    for axis in range(sums.ndim):
        c = np.cumsum(sums, axis=axis)
        pad_shape = list(c.shape)
        pad_shape[axis] = 1
        c = np.concatenate([np.zeros(pad_shape), c], axis=axis)
        n_valid = c.shape[axis] - k2
        idx_hi = np.arange(k2, c.shape[axis])
        idx_lo = np.arange(0, n_valid)
        sums = c.take(idx_hi, axis) - c.take(idx_lo, axis)
    out = np.full(grid.node_shape, np.nan)
    out[mask] = sums.ravel() / float(k2 ** vals.ndim)
    return out


def _cell_gradients(grid, values):
    vals = np.asarray(values, dtype=float).reshape(grid.node_shape)
    spacing = grid.spacing
    if grid.dimension == 1:
        return (np.diff(vals) / spacing)[:, None]
    gx = 0.5 * (np.diff(vals, axis=0)[:, :-1] + np.diff(vals, axis=0)[:, 1:])
    gy = 0.5 * (np.diff(vals, axis=1)[:-1, :] + np.diff(vals, axis=1)[1:, :])
    return np.stack([gx, gy], axis=-1).reshape(-1, 2) / spacing


def _inner_distance(grid, inner_mask):
    """Distance from the inner node set to the boundary of the grid box."""
    mask = np.asarray(inner_mask, dtype=bool).reshape(grid.node_shape)
    if not mask.any():
        raise InputError("inner region is empty")
    dists = []
    for axis in range(grid.dimension):
        idx = np.where(mask.any(axis=tuple(a for a in range(grid.dimension)
                                           if a != axis)))[0]
        x = grid.axis_nodes(axis)[idx]
        lo, hi = grid.origin[axis], grid.origin[axis] + grid.lengths[axis]
        dists.append(min(x.min() - lo, hi - x.max()))
    return min(dists)


def check_shift_poincare(grid, values, inner_mask, r, constant):
    """Averaged-shift Poincare inequality on an inner region.

    lhs integrates |v - v_r|^2 over the inner nodes (trapezoid weights),
    rhs is constant * r^2 * integral of |grad v|^2 over the whole grid.
    The window must satisfy r < 2 dist(inner, boundary) / ((2+sqrt n) sqrt n).
    """
    n = grid.dimension
    margin = 2.0 * _inner_distance(grid, inner_mask) \
        / ((2.0 + np.sqrt(n)) * np.sqrt(n))
    if not r < margin + 1e-12:
        raise InputError(
            f"window side {r} violates the margin bound "
            f"r < 2 dist/( (2+sqrt(n)) sqrt(n) ) = {margin:.6g}")
    vals = np.asarray(values, dtype=float).reshape(grid.node_shape)
    avg = cube_average(grid, vals, r)
    mask = np.asarray(inner_mask, dtype=bool).reshape(grid.node_shape)
    if np.isnan(avg[mask]).any():
        raise InputError("inner region exceeds the averaged field's support")

    weights = np.full(grid.node_shape, grid.spacing ** n)
    for axis in range(n):
        sl = [slice(None)] * n
        for end in (0, -1):
            sl[axis] = end
            weights[tuple(sl)] *= 0.5
    lhs = float(np.sum(weights[mask] * (vals[mask] - avg[mask]) ** 2))
    grads = _cell_gradients(grid, vals)
    dirichlet = grid.spacing ** n * float(np.sum(grads ** 2))
    rhs = constant * r ** 2 * dirichlet
    ratio = lhs / (r ** 2 * dirichlet) if dirichlet > 0 else 0.0
    return AveragingReport(label="shift-poincare", r=float(r), lhs=lhs,
                           rhs=rhs, ratio=ratio, constant=float(constant),
                           holds=bool(lhs <= rhs + 1e-10 * max(1.0, rhs)))


def effective_matrix(h, N=64):
    """Effective quadratic form of h as a matrix, via the cell problem.

    For the quadratic integrands used here the homogenized density is a
    quadratic form; its matrix is recovered from axis and diagonal
    directions by polarization.
    """
    n = h.dimension
    mat = np.zeros((n, n))
    basis = np.eye(n)
    diag_vals = []
    for i in range(n):
        diag_vals.append(solve_h_hom(h, basis[i], N).value)
        mat[i, i] = diag_vals[i]
    for i in range(n):
        for j in range(i + 1, n):
            mixed = solve_h_hom(h, basis[i] + basis[j], N).value
            mat[i, j] = mat[j, i] = 0.5 * (mixed - diag_vals[i]
                                           - diag_vals[j])
    return mat


def check_hom_lower_bound(grid, values, h, delta, sigma, K, N_cell=64):
    """Homogenized lower bound for the oscillating surface integrand.

    lhs  = integral over A of h(x/delta, grad v)
    rhs  = integral over A of h_hom(grad v_{K delta})
           - sigma * integral over the whole grid of |grad v|^2
    with A the nodes having the paper margin (2+sqrt n) sqrt n K delta / 2
    from the boundary and v_{K delta} the cube average.
    """
    n = grid.dimension
    r = K * delta
    margin = (2.0 + np.sqrt(n)) * np.sqrt(n) * r / 2.0
    vals = np.asarray(values, dtype=float).reshape(grid.node_shape)

    inner = np.ones(grid.node_shape, dtype=bool)
    for axis in range(n):
        x = grid.axis_nodes(axis)
        lo, hi = grid.origin[axis], grid.origin[axis] + grid.lengths[axis]
        line = (x >= lo + margin - 1e-12) & (x <= hi - margin + 1e-12)
        shape = [1] * n
        shape[axis] = x.size
        inner &= line.reshape(shape)
    if not inner.any():
        raise InputError(
            f"margin {margin:.6g} for K delta = {r} leaves no interior "
            f"region; enlarge the grid or shrink K delta")

    avg = cube_average(grid, vals, r)
    # cells all of whose nodes are inner (and averaged) form region A
    cell_inner = inner
    cell_avg_ok = ~np.isnan(avg)
    for axis in range(n):
        m = cell_inner.shape[axis]
        cell_inner = cell_inner.take(range(m - 1), axis) \
            & cell_inner.take(range(1, m), axis)
        cell_avg_ok = cell_avg_ok.take(range(m - 1), axis) \
            & cell_avg_ok.take(range(1, m), axis)
    region = (cell_inner & cell_avg_ok).ravel()
    if not region.any():
        raise InputError("no full cell inside region A")

    vol = grid.spacing ** n
    mids = np.asarray(grid.cell_midpoints()).reshape(-1, n)
    grads = _cell_gradients(grid, vals)
    coeff = h.coefficient_matrix(mids[region] / delta)
    lhs = vol * float(np.einsum("ci,cij,cj->", grads[region], coeff,
                                grads[region]))

    avg_filled = np.where(np.isnan(avg), 0.0, avg)
    grads_avg = _cell_gradients(grid, avg_filled)[region]
    h_mat = effective_matrix(h, N=N_cell)
    bulk_hom = vol * float(np.einsum("ci,ij,cj->", grads_avg, h_mat,
                                     grads_avg))
    dirichlet = vol * float(np.sum(grads ** 2))
    rhs = bulk_hom - sigma * dirichlet
    ratio = lhs / bulk_hom if bulk_hom > 0 else np.inf
    return AveragingReport(label="hom-lower-bound", r=float(r), lhs=lhs,
                           rhs=rhs, ratio=ratio, constant=float(sigma),
                           holds=bool(lhs >= rhs - 1e-10 * max(1.0, abs(rhs))))


def calibrate_poincare_constant(grid, fields, r_values, inner_mask):
    """Largest observed lhs / (r^2 |grad v|^2) ratio over the corpus."""
    worst = 0.0
    for vals in fields:
        for r in r_values:
            rep = check_shift_poincare(grid, vals, inner_mask, r,
                                       constant=np.inf)
            worst = max(worst, rep.ratio)
    return worst


def calibrate_window_factor(grid, fields, h, delta, sigma, K_max=64,
                            N_cell=64):
    """Double K until the homogenized lower bound holds on every sample."""
    K = 1
    while K <= K_max:
        try:
            if all(check_hom_lower_bound(grid, vals, h, delta, sigma, K,
                                         N_cell=N_cell).holds
                   for vals in fields):
                return K
        except InputError:
            break
        K *= 2
    raise SolverError(
        f"no window factor K <= {K_max} satisfies the sigma={sigma} "
        f"lower bound on the calibration corpus")
