"""Effective coefficient solvers for the periodic bulk and surface densities.

Two cell problems live here.  The surface coefficient is a single periodic
corrector solve on the unit torus (exact for quadratic integrands, no
asymptotic sequence needed).  The bulk coefficient is the growing-cube
formula: minimize the oscillating energy over cubes of increasing side with
affine boundary data, divide by the volume, and watch the values settle.
Both discretize with bilinear elements on uniform grids, one constant
coefficient matrix per cell sampled at the cell midpoint.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import _assembly as fem
from .errors import InputError, SolverError
from .geometry import BoxGrid, TorusGrid

__all__ = [
    "EffectiveDensityResult",
    "spec_digest",
    "solve_h_hom",
    "solve_f_hom",
    "h_hom_table",
    "f_hom_table",
    "CSV_FIELDS",
]

CSV_FIELDS = ("spec_id", "vector", "size", "value", "residual")

_REL_STOP = 1e-3


def spec_digest(spec):
    """Stable short id of an integrand spec, from its dictionary form."""
    blob = json.dumps(spec.to_dict(), sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:10]


@dataclass
class EffectiveDensityResult:
    """Outcome of one effective-coefficient computation.

    convergence_table holds (mesh size N or cube side r, value) pairs in the
    order they were computed; residuals is the parallel list of final linear
    solver residuals.  A batch entry that failed carries error != None, a nan
    value and an empty table.
    """

    kind: str
    spec_id: str
    vector: np.ndarray
    value: float
    convergence_table: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    iterations: int = 0
    corrector: np.ndarray | None = None
    error: str | None = None

    @property
    def residual(self):
        return self.residuals[-1] if self.residuals else float("nan")

    def csv_rows(self):
        vec = ";".join(f"{c:.12g}" for c in np.atleast_1d(self.vector))
        if self.error is not None:
            return [{"spec_id": self.spec_id, "vector": vec, "size": 0,
                     "value": float("nan"), "residual": float("nan")}]
        return [{"spec_id": self.spec_id, "vector": vec, "size": size,
                 "value": value, "residual": res}
                for (size, value), res in zip(self.convergence_table,
                                              self.residuals)]


def _check_vector(spec, vec, name):
    n = spec.dimension
    if n not in (1, 2):
        raise InputError("effective-coefficient solves support dimension 1 and 2")
    v = np.atleast_1d(np.asarray(vec, dtype=float))
    if v.shape != (n,):
        raise InputError(f"{name} must have {n} components, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InputError(f"{name} must be finite")
    return v


def solve_h_hom(h, w, N):
    """Periodic corrector value of the surface density in direction w.

    Minimizes the unit-cell energy of w plus a periodic gradient over mean
    zero correctors; for the quadratic forms handled here this equals the
    zero-boundary formulation at the level of the infimum.  The system is
    solved by conjugate gradient to relative residual 1e-10.
    """
    N = int(N)
    if N < 8:
        raise InputError(f"mesh must have at least 8 cells per axis, got {N}")
    w = _check_vector(h, w, "direction vector")
    sid = spec_digest(h)
    if not np.any(w):
        return EffectiveDensityResult("surface", sid, w, 0.0,
                                      convergence_table=[(N, 0.0)],
                                      residuals=[0.0])

    grid = TorusGrid(h.dimension, N)
    mids = grid.cell_midpoints()
    if h.dimension == 1:
        a = h.coefficient_matrix(mids)[..., 0, 0]
        stiffness = fem.periodic_stiffness_1d(a, grid.spacing)
        linear = fem.gradient_load_1d(a * w[0])
        const = float(grid.spacing * np.sum(a) * w[0] ** 2)
    else:
        coeff = h.coefficient_matrix(mids)
        ids = fem.cell_node_ids_torus(N)
        stiffness = fem.assemble_from_elements(
            fem.element_stiffness(coeff), ids, N * N)
        p = np.einsum("...ij,j->...i", coeff, w)
        linear = fem.gradient_load(p, ids, N * N, grid.spacing)
        const = float(grid.spacing ** 2
                      * np.einsum("i,...ij,j->...", w, coeff, w).sum())

    u, iters, res = fem.cg_solve(stiffness, -linear,
                                 label="periodic corrector solve")
    value = const + float(linear @ u)
    corrector = u - u.mean()
    if h.dimension == 2:
        corrector = corrector.reshape(N, N)
    return EffectiveDensityResult("surface", sid, w, value,
                                  convergence_table=[(N, value)],
                                  residuals=[res], iterations=iters,
                                  corrector=corrector)


def _cube_value(f, xi, r, n_per_cell):
    """Normalized minimum over the side-r cube with affine boundary data."""
    spacing = 1.0 / n_per_cell
    m_cells = r * n_per_cell
    if f.dimension == 1:
        mids = -r / 2.0 + spacing * (np.arange(m_cells) + 0.5)
        a = f.coefficient_matrix(mids)[..., 0, 0]
        stiffness = fem.box_stiffness_1d(a, spacing)
        linear = fem.box_gradient_load_1d(a * xi[0])
        const = float(spacing * np.sum(a) * xi[0] ** 2)
        n_nodes = m_cells + 1
        fixed = np.zeros(n_nodes, dtype=bool)
        fixed[[0, -1]] = True
        shape = (n_nodes,)
    else:
        box = BoxGrid(origin=(-r / 2.0, -r / 2.0), lengths=(r, r),
                      n_cells=(m_cells, m_cells))
        coeff = f.coefficient_matrix(box.cell_midpoints())
        m = m_cells + 1
        ids = fem.cell_node_ids_box((m, m))
        stiffness = fem.assemble_from_elements(
            fem.element_stiffness(coeff), ids, m * m)
        p = np.einsum("...ij,j->...i", coeff, xi)
        linear = fem.gradient_load(p, ids, m * m, spacing)
        const = float(spacing ** 2
                      * np.einsum("i,...ij,j->...", xi, coeff, xi).sum())
        edge = np.zeros((m, m), dtype=bool)
        edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
        fixed = edge.ravel()
        shape = (m, m)

    free = ~fixed
    sub = stiffness[free][:, free]
    u_free, iters, res = fem.cg_solve(sub, -linear[free],
                                      label=f"cube solve at r={r}")
    value = (const + float(linear[free] @ u_free)) / r ** f.dimension
    full = np.zeros(fixed.size)
    full[free] = u_free
    return value, res, iters, full.reshape(shape)


def solve_f_hom(f, xi, r_list, N_per_cell):
    """Growing-cube value of the bulk density at gradient xi.

    Correction fields vanish on the outermost node layer ("affine near the
    boundary"); values along the doubling sequence are nonincreasing up to
    solver tolerance because an r-cube minimizer tiles the 2r cube.  Stops
    early when consecutive values agree to 1e-3 relative.
    """
    xi = _check_vector(f, xi, "gradient vector")
    r_list = [int(r) for r in r_list]
    if not r_list:
        raise InputError("r_list must be nonempty")
    if any(r < 1 for r in r_list):
        raise InputError("cube sides must be positive integers")
    for a, b in zip(r_list, r_list[1:]):
        if b <= a or b % a != 0:
            raise InputError("r_list must be increasing with each entry "
                             f"dividing the next, got {r_list}")
    n_per_cell = int(N_per_cell)
    if n_per_cell < 2:
        raise InputError(f"N_per_cell must be at least 2, got {N_per_cell}")

    sid = spec_digest(f)
    if not np.any(xi):
        return EffectiveDensityResult("bulk", sid, xi, 0.0,
                                      convergence_table=[(r_list[0], 0.0)],
                                      residuals=[0.0])

    table = []
    residuals = []
    total_iters = 0
    corrector = None
    prev = None
    for r in r_list:
        value, res, iters, corrector = _cube_value(f, xi, r, n_per_cell)
        table.append((r, value))
        residuals.append(res)
        total_iters += iters
        if prev is not None and abs(value - prev) <= _REL_STOP * abs(prev):
            break
        prev = value
    return EffectiveDensityResult("bulk", sid, xi, table[-1][1],
                                  convergence_table=table,
                                  residuals=residuals, iterations=total_iters,
                                  corrector=corrector)


def _failed(kind, sid, vec, exc):
    return EffectiveDensityResult(kind, sid, np.atleast_1d(np.asarray(vec, float)),
                                  float("nan"), error=str(exc))


def h_hom_table(h, w_list, N=256):
    """solve_h_hom over a list of directions; solver failures are recorded
    per entry instead of aborting the batch."""
    w_list = list(w_list)
    if not w_list:
        raise InputError("direction list must be nonempty")
    out = []
    for w in w_list:
        try:
            out.append(solve_h_hom(h, w, N))
        except SolverError as exc:
            out.append(_failed("surface", spec_digest(h), w, exc))
    return out


def f_hom_table(f, xi_list, r_list=(1, 2, 4), N_per_cell=64):
    """solve_f_hom over a list of gradients, same failure policy as h_hom_table."""
    xi_list = list(xi_list)
    if not xi_list:
        raise InputError("gradient list must be nonempty")
    out = []
    for xi in xi_list:
        try:
            out.append(solve_f_hom(f, xi, r_list, N_per_cell))
        except SolverError as exc:
            out.append(_failed("bulk", spec_digest(f), xi, exc))
    return out
