"""Homogenized interface energies for the three scaling regimes.

The regime is set by how fast the coefficient oscillation period shrinks
relative to the phase-field width eps.  Coarse oscillations (regime "zero")
reduce the interface problem to a shortest path in the anisotropic metric
sqrt(h); comparable scales (regime "finite") require minimizing the full
transition functional around candidate cracks; fine oscillations (regime
"infinity") compose with the periodic corrector value, 2 sqrt of it.

All solvers work on a rotated cube aligned with the prescribed interface
normal and report a small convergence table over growing cube sides; the
last increment doubles as the error bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra

from . import _assembly as fem
from .cell_problems import solve_h_hom, spec_digest
from .errors import InputError, InternalError
from .geometry import Direction, RotatedCubeGrid
from .profiles import boundary_pair

__all__ = [
    "RegimeParams",
    "Regime",
    "regime_select",
    "SurfaceDensityResult",
    "g0_hom",
    "g_ell_hom",
    "g_inf_hom",
    "SURFACE_CSV_FIELDS",
]

SURFACE_CSV_FIELDS = ("regime", "ell", "angle", "size", "value", "error_bar")

# Half-stencils; the graph is undirected so only one orientation is stored.
_STENCIL_8 = ((1, 0), (0, 1), (1, 1), (1, -1))
_STENCIL_16 = _STENCIL_8 + ((2, 1), (1, 2), (2, -1), (1, -2))


@dataclass(frozen=True)
class RegimeParams:
    """Power-law scaling rules delta = d * eps^beta, eta = e * eps^gamma.

    eps_sequence is the finite set of regularization lengths an experiment
    sweeps; the classification itself only depends on the exponents.
    """

    eps_sequence: tuple
    delta_coeff: float = 1.0
    delta_exponent: float = 1.0
    eta_coeff: float = 1.0
    eta_exponent: float = 2.0

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_sequence)
        if not eps:
            raise InputError("eps_sequence must be nonempty")
        if any(e <= 0 for e in eps):
            raise InputError("eps_sequence entries must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise InputError("eps_sequence must be strictly decreasing")
        object.__setattr__(self, "eps_sequence", eps)
        for name in ("delta_coeff", "eta_coeff"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be positive")
        if self.delta_exponent <= 0:
            raise InputError("delta_exponent must be positive: the oscillation "
                             "period has to vanish with eps")
        if self.eta_exponent <= 0:
            raise InputError("eta_exponent must be positive: the lower-order "
                             "term has to vanish with eps")

    def delta_of(self, eps):
        return self.delta_coeff * float(eps) ** self.delta_exponent

    def eta_of(self, eps):
        return self.eta_coeff * float(eps) ** self.eta_exponent

    @property
    def ell(self):
        """Limit of eps / delta(eps): 0, a finite positive number, or inf."""
        if self.delta_exponent > 1.0:
            return math.inf
        if self.delta_exponent == 1.0:
            return 1.0 / self.delta_coeff
        return 0.0

    @property
    def alpha(self):
        """Common exponent when period and well scales match, else None."""
        if self.delta_exponent == self.eta_exponent:
            return self.delta_exponent
        return None


@dataclass(frozen=True)
class Regime:
    label: str
    ell: float

    def __str__(self):
        if self.label == "finite":
            return f"finite({self.ell:g})"
        return self.label


def regime_select(params):
    """Classify the scaling regime of a RegimeParams instance.

    The well scale must vanish faster than eps itself; the fine-oscillation
    regime additionally needs the period and well scales to share a single
    exponent larger than one, otherwise no homogeneous limit is available.
    """
    if params.eta_exponent <= 1.0:
        raise InputError(
            "eta must vanish strictly faster than eps: eta_exponent must "
            f"exceed 1, got {params.eta_exponent}")
    ell = params.ell
    if math.isinf(ell):
        if params.alpha is None:
            raise InputError(
                "fine-oscillation regime needs matched scales "
                "delta ~ eta ~ eps^alpha with a single exponent alpha > 1; "
                f"got delta_exponent={params.delta_exponent}, "
                f"eta_exponent={params.eta_exponent}")
        return Regime("infinity", math.inf)
    if ell > 0.0:
        return Regime("finite", ell)
    return Regime("zero", 0.0)


@dataclass
class SurfaceDensityResult:
    """One homogenized interface energy in one direction."""

    nu: Direction
    regime: Regime
    value: float
    convergence_table: list = field(default_factory=list)
    error_bar: float = float("nan")
    diagnostics: dict = field(default_factory=dict)

    def csv_rows(self):
        rows = []
        prev = None
        for size, value in self.convergence_table:
            bar = float("nan") if prev is None else abs(value - prev)
            rows.append({"regime": self.regime.label, "ell": self.regime.ell,
                         "angle": self.nu.angle, "size": size,
                         "value": value, "error_bar": bar})
            prev = value
        return rows

    def polar_row(self):
        return (self.nu.angle, self.value)


def _as_direction_2d(nu):
    if not isinstance(nu, Direction):
        nu = Direction(nu)
    if nu.dimension != 2:
        raise InputError("surface densities are computed for 2D directions")
    return nu


def _check_r_list(r_list):
    rs = [float(r) for r in r_list]
    if not rs:
        raise InputError("r_list must be nonempty")
    if any(r <= 0 for r in rs):
        raise InputError("cube sides must be positive")
    if any(b <= a for a, b in zip(rs, rs[1:])):
        raise InputError("r_list must be strictly increasing")
    return rs


# Composite-midpoint samples per edge.  A single midpoint undercharges edges
# that straddle a coefficient jump, enough for the shortest path to milk the
# quadrature (about 3 percent on the half-half laminate); eight panels push
# that artifact below the metrication slack.
_EDGE_SUBSAMPLES = 8


def _interface_graph(grid, spec, allowed, stencil):
    """Sparse undirected graph whose edge weights integrate sqrt(h).

    Each edge is weighted by its length times the composite-midpoint average
    of sqrt(h(., unit normal)) along it, so a path cost is the discrete
    interface energy of the polyline.
    """
    m = grid.nodes_per_axis
    delta = grid.spacing
    axis = grid.axis
    rot = grid.rotation
    offsets = _STENCIL_16 if stencil == 16 else _STENCIL_8
    fractions = (np.arange(_EDGE_SUBSAMPLES) + 0.5) / _EDGE_SUBSAMPLES
    rows, cols, vals = [], [], []
    for a, b in offsets:
        i = np.arange(0, m - a)
        j = np.arange(max(0, -b), m - max(0, b))
        if i.size == 0 or j.size == 0:
            continue
        ii, jj = np.meshgrid(i, j, indexing="ij")
        ok = allowed[ii, jj] & allowed[ii + a, jj + b]
        if not ok.any():
            continue
        ii, jj = ii[ok], jj[ok]
        starts = np.stack([axis[ii], axis[jj]], axis=-1)
        step = delta * np.array([a, b], dtype=float)
        pts_local = starts[:, None, :] + fractions[None, :, None] * step
        pts_world = pts_local @ rot.T
        direction = rot @ np.array([a, b], dtype=float)
        direction /= np.linalg.norm(direction)
        normal = np.array([-direction[1], direction[0]])
        weight = (delta * math.hypot(a, b)
                  * spec.sqrt_eval(pts_world, normal).mean(axis=1))
        rows.append(ii * m + jj)
        cols.append((ii + a) * m + (jj + b))
        vals.append(weight)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    vals = np.concatenate(vals)
    return sp.coo_matrix((vals, (rows, cols)), shape=(m * m, m * m)).tocsr()


def g0_hom(h, nu, r_list=(4, 8), grid_spacing=1.0 / 16.0, stencil=16):
    """Coarse-oscillation interface energy: 2/r times a shortest path.

    The minimizing partition boundary is a curve crossing the rotated cube;
    it is found exactly on the grid graph, restricted to the flat interface
    inside the boundary layer.  stencil selects 8 or 16 neighbors; the wider
    stencil bounds the metrication error by about 1.3 percent.
    """
    nu = _as_direction_2d(nu)
    if h.dimension != 2:
        raise InputError("g0_hom needs a 2D surface integrand")
    if stencil not in (8, 16):
        raise InputError(f"stencil must be 8 or 16, got {stencil}")
    rs = _check_r_list(r_list)
    table = []
    path_nodes = None
    for r in rs:
        grid = RotatedCubeGrid(nu, r, grid_spacing)
        m = grid.nodes_per_axis
        axis = grid.axis
        j0 = int(np.argmin(np.abs(axis)))
        interior = np.abs(axis) <= r / 2.0 - grid.boundary_layer + 1e-12
        allowed = np.zeros((m, m), dtype=bool)
        allowed[interior, :] = True
        allowed[:, j0] = True
        graph = _interface_graph(grid, h, allowed, stencil)
        source = 0 * m + j0
        target = (m - 1) * m + j0
        dist, pred = dijkstra(graph, directed=False, indices=source,
                              return_predecessors=True)
        cost = dist[target]
        if not np.isfinite(cost):
            raise InternalError("interface graph is disconnected; the cube "
                                "grid should always contain the flat path")
        table.append((r, 2.0 * cost / r))
        node, chain = target, []
        while node != -9999 and node >= 0:
            chain.append((node // m, node % m))
            node = pred[node]
        path_nodes = chain[::-1]
    value = table[-1][1]
    bar = abs(table[-1][1] - table[-2][1]) if len(table) > 1 else float("nan")
    return SurfaceDensityResult(
        nu=nu, regime=Regime("zero", 0.0), value=value,
        convergence_table=table, error_bar=bar,
        diagnostics={"spec_id": spec_digest(h), "stencil": stencil,
                     "path_nodes": path_nodes})


def _crack_family(grid, spec, ell, size):
    """Candidate crack graphs over the tangent axis, flat first.

    Doglegs shift the crack by fractions of the oscillation period of
    h(ell x); sinusoids perturb it at that period.  All candidates are
    snapped to grid nodes, slope-limited to one node per step, and pinned
    to the flat interface inside the boundary layer.
    """
    axis = grid.axis
    m = axis.size
    delta = grid.spacing
    r = grid.r
    j0 = int(np.argmin(np.abs(axis)))
    free = np.abs(axis) <= r / 2.0 - grid.boundary_layer + 1e-12
    idx_free = np.where(free)[0]
    i_lo, i_hi = (int(idx_free[0]), int(idx_free[-1])) if idx_free.size else (0, -1)
    budget = np.zeros(m, dtype=int)
    if idx_free.size:
        ar = np.arange(m)
        budget[idx_free] = np.minimum(ar[idx_free] - i_lo, i_hi - ar[idx_free])

    period = spec.feature_scale
    world_period = (period / ell) if period is not None else 8.0 * delta

    def snapped(shift):
        return int(round(shift / delta))

    cracks = [("flat", np.full(m, j0, dtype=int))]
    seen = {cracks[0][1].tobytes()}

    def push(label, g):
        g = np.clip(g, 0, m - 1)
        key = g.tobytes()
        if key not in seen:
            seen.add(key)
            cracks.append((label, g))

    # Doglegs at quarter-period offsets, alternating sign, growing magnitude.
    k = 1
    while len(cracks) < size and k <= 4 * size:
        shift = (1 + (k - 1) // 2) * world_period / 4.0
        sign = 1 if k % 2 else -1
        steps = sign * snapped(shift)
        if steps != 0 and abs(steps) < m // 2:
            g = j0 + np.sign(steps) * np.minimum(abs(steps), budget)
            push(f"dogleg{steps:+d}", g.astype(int))
        k += 1

    # Sinusoidal perturbations at the coefficient period and its double.
    amp = world_period / 4.0
    for wave_mult in (1.0, 2.0):
        if len(cracks) >= size:
            break
        wave = wave_mult * world_period
        raw = amp * np.sin(2.0 * np.pi * axis / wave)
        steps = np.round(raw / delta).astype(int)
        steps = np.sign(steps) * np.minimum(np.abs(steps), budget)
        # slope limit: at most one node of shift per tangent step
        for i in range(1, m):
            lo, hi = steps[i - 1] - 1, steps[i - 1] + 1
            steps[i] = min(max(steps[i], lo), hi)
        push(f"wave x{wave_mult:g}", j0 + steps)

    return cracks[:size]


def _crack_energy(grid, spec, ell, crack, ring_data):
    """Minimum of the transition energy with the crack and ring constraints.

    Works in w = 1 - v, so the energy is the pure quadratic form
    w (M + K) w with exact bilinear element matrices; the solve is SPD.
    """
    m = grid.nodes_per_axis
    delta = grid.spacing
    rot = grid.rotation
    mids_world = grid.world_cell_midpoints()
    coeff = spec.coefficient_matrix(ell * mids_world)
    local = np.einsum("ba,...bc,cd->...ad", rot, coeff, rot)
    elements = fem.element_stiffness(local) + (delta ** 2) * fem.MASS_REF
    ids = fem.cell_node_ids_box((m, m))
    system = fem.assemble_from_elements(elements, ids, m * m)

    w_fixed = np.full(m * m, np.nan)
    ring = np.zeros((m, m), dtype=bool)
    ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
    w_fixed[ring.ravel()] = np.broadcast_to(ring_data, (m, m))[ring]
    crack_ids = np.arange(m) * m + crack
    w_fixed[crack_ids] = 1.0

    fixed = ~np.isnan(w_fixed)
    free = ~fixed
    w = np.where(fixed, w_fixed, 0.0)
    rhs = -(system[free][:, fixed] @ w[fixed])
    w_free, iters, res = fem.cg_solve(system[free][:, free], rhs,
                                      label="crack transition solve")
    w[free] = w_free
    energy = float(w @ (system @ w))
    return energy, res, iters


def g_ell_hom(h, ell, nu, r_list=(8, 16), grid_spacing=0.125,
              interface_family_size=7):
    """Comparable-scale interface energy via a candidate-crack family.

    For each crack the transition field minimizes (1-v)^2 + h(ell x, grad v)
    with v = 0 on the crack and the explicit boundary profile pair on the
    cube boundary; the reported value is the family minimum over r.  The
    crack family is an upper-bound device: flat plus period-seeking
    perturbations, which covers the minimizing patterns for laminates.
    """
    nu = _as_direction_2d(nu)
    if h.dimension != 2:
        raise InputError("g_ell_hom needs a 2D surface integrand")
    if not (np.isfinite(ell) and ell > 0):
        raise InputError(f"ell must be finite and positive, got {ell}")
    size = int(interface_family_size)
    if size < 1:
        raise InputError("interface family must contain at least one crack")
    rs = _check_r_list(r_list)

    table = []
    best_label = None
    family_energies = None
    residual = float("nan")
    for r in rs:
        grid = RotatedCubeGrid(nu, r, grid_spacing)
        ring_w = 1.0 - boundary_pair(nu, grid.axis)[1]
        cracks = _crack_family(grid, h, ell, size)
        energies = []
        for label, crack in cracks:
            energy, res, _ = _crack_energy(grid, h, ell, crack, ring_w)
            energies.append((energy, label))
            residual = res
        energies.sort(key=lambda t: t[0])
        best, best_label = energies[0]
        family_energies = [(lab, e / r) for e, lab in energies]
        table.append((r, best / r))
    value = table[-1][1]
    bar = abs(table[-1][1] - table[-2][1]) if len(table) > 1 else float("nan")
    return SurfaceDensityResult(
        nu=nu, regime=Regime("finite", float(ell)), value=value,
        convergence_table=table, error_bar=bar,
        diagnostics={"spec_id": spec_digest(h), "winning_crack": best_label,
                     "family_values": family_energies, "residual": residual})


def g_inf_hom(h, nu, N=256):
    """Fine-oscillation interface energy, 2 sqrt of the corrector value."""
    nu = _as_direction_2d(nu)
    corr = solve_h_hom(h, nu.vector, N)
    value = 2.0 * math.sqrt(corr.value)
    return SurfaceDensityResult(
        nu=nu, regime=Regime("infinity", math.inf), value=value,
        convergence_table=[(N, value)], error_bar=float("nan"),
        diagnostics={"spec_id": corr.spec_id, "corrector_value": corr.value,
                     "residual": corr.residual})
