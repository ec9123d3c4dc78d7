"""Limit-functional evaluation and the exact 1D limit minimization.

The limit energy is bulk plus a jump sum.  In 1D the minimization over
piecewise-smooth fields with at most a few jumps is solved exactly: for every
admissible set of jump locations on a uniform candidate grid, each segment
minimizes a quadratic (tridiagonal) problem with natural ends, and dynamic
programming combines the segment costs with one surface charge per jump.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .errors import InputError, UnsupportedError

__all__ = [
    "JumpField1D",
    "CrackPolyline2D",
    "energy_F_hom",
    "M_ell_1d",
    "no_jump_energy",
]

_MAX_JUMPS = 3


@dataclass(frozen=True)
class JumpField1D:
    """Piecewise W^{1,2} field on an interval with finitely many jumps.

    nodes[k] and values[k] sample the k-th segment; breakpoints are the jump
    locations separating consecutive segments.
    """

    breakpoints: tuple
    nodes: tuple
    values: tuple

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        nodes = tuple(np.asarray(x, dtype=float) for x in self.nodes)
        values = tuple(np.asarray(u, dtype=float) for u in self.values)
        if len(nodes) != len(values) or len(nodes) != len(bp) + 1:
            raise InputError(
                f"{len(bp)} breakpoints need {len(bp) + 1} segments, "
                f"got {len(nodes)} node arrays and {len(values)} value arrays")
        if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
            raise InputError(f"breakpoints must be strictly increasing: {bp}")
        lo = nodes[0][0]
        hi = nodes[-1][-1]
        if bp and not (lo < bp[0] and bp[-1] < hi):
            raise InputError(
                f"breakpoints {bp} must be interior to ({lo}, {hi})")
        for x, u in zip(nodes, values):
            if x.ndim != 1 or x.shape != u.shape or x.size < 2:
                raise InputError("each segment needs matching 1d samples "
                                 "with at least two nodes")
            if not (np.isfinite(x).all() and np.isfinite(u).all()):
                raise InputError("segments must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "values", values)

    @property
    def jump_count(self):
        return len(self.breakpoints)


def _segments_intersect(p, q, r, s):
    """Proper intersection test for segments pq and rs."""
    def orient(a, b, c):
        d = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        return 0 if abs(d) < 1e-14 else (1 if d > 0 else -1)
    o1, o2 = orient(p, q, r), orient(p, q, s)
    o3, o4 = orient(r, s, p), orient(r, s, q)
    return o1 != o2 and o3 != o4 and 0 not in (o1, o2, o3, o4)


@dataclass(frozen=True)
class CrackPolyline2D:
    """Simple polyline crack across a rectangle, with side labels for u."""

    vertices: np.ndarray
    left_value: float = 0.0
    right_value: float = 1.0
    domain: tuple = ((0.0, 1.0), (0.0, 1.0))

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=float)
        if verts.ndim != 2 or verts.shape[1] != 2 or verts.shape[0] < 2:
            raise InputError(f"vertex chain must be (k, 2), got {verts.shape}")
        if not np.isfinite(verts).all():
            raise InputError("vertices must be finite")
        (x0, x1), (y0, y1) = self.domain
        tol = 1e-12

        def on_face(p):
            faces = []
            if abs(p[0] - x0) < tol:
                faces.append("left")
            if abs(p[0] - x1) < tol:
                faces.append("right")
            if abs(p[1] - y0) < tol:
                faces.append("bottom")
            if abs(p[1] - y1) < tol:
                faces.append("top")
            return faces

        first, last = on_face(verts[0]), on_face(verts[-1])
        opposite = {"left": "right", "right": "left",
                    "top": "bottom", "bottom": "top"}
        if not any(opposite[a] in last for a in first):
            raise InputError(
                "crack endpoints must lie on opposite faces of the domain")
        edges = list(zip(verts[:-1], verts[1:]))
        for i, (p, q) in enumerate(edges):
            if np.allclose(p, q):
                raise InputError("degenerate polyline edge")
            for p2, q2 in edges[i + 2:]:
                if _segments_intersect(p, q, p2, q2):
                    raise InputError("crack polyline must not self-intersect")
        object.__setattr__(self, "vertices", verts)

    def edge_lengths_normals(self):
        d = np.diff(self.vertices, axis=0)
        lengths = np.hypot(d[:, 0], d[:, 1])
        normals = np.stack([-d[:, 1], d[:, 0]], axis=-1) / lengths[:, None]
        return lengths, normals


def _bulk_1d(nodes, values, f_hom_value_fn):
    dx = np.diff(nodes)
    slopes = np.diff(values) / dx
    return float(np.sum(dx * np.asarray(f_hom_value_fn(slopes), dtype=float)))


def energy_F_hom(u, f_hom_value_fn, g_hom_value_fn, domain=None):
    """Limit energy: bulk over smooth parts plus surface charge per jump.

    Accepts a JumpField1D, a CrackPolyline2D (u locally constant, zero bulk),
    or a (grid, values, crack_or_None) triple for a 2D field sampled on a
    BoxGrid with an optional crack.
    """
    if isinstance(u, JumpField1D):
        bulk = sum(_bulk_1d(x, vals, f_hom_value_fn)
                   for x, vals in zip(u.nodes, u.values))
        surface = u.jump_count * float(g_hom_value_fn(1.0))
        return bulk + surface
    if isinstance(u, CrackPolyline2D):
        lengths, normals = u.edge_lengths_normals()
        densities = np.array([float(g_hom_value_fn(nu)) for nu in normals])
        return float(np.sum(lengths * densities))
    try:
        grid, values, crack = u
    except (TypeError, ValueError):
        raise InputError(
            "u must be a JumpField1D, a CrackPolyline2D, or a "
            "(grid, values, crack) triple") from None
    from .at_solver import _grid_data, _world_grads
    gd = _grid_data(grid)
    grads = _world_grads(gd, np.asarray(values, dtype=float).ravel())
    bulk = gd.volume * float(np.sum(f_hom_value_fn(grads)))
    surface = 0.0
    if crack is not None:
        surface = energy_F_hom(crack, f_hom_value_fn, g_hom_value_fn)
    return bulk + surface


def _segment_solve(g_cells, dx, f_hom_coeff):
    """Minimize sum_c dx*f*slope^2 + dx*(cell avg of u - g_c)^2 on a segment.

    The fidelity samples both u and the datum at cell midpoints, so a jump
    location never charges its own node; natural ends.  Returns the nodal
    minimizer and the minimal value via min = sum dx g_c^2 - rhs . u.
    """
    nc = g_cells.size
    n = nc + 1
    k = f_hom_coeff / dx
    diag = np.full(n, 2.0 * k + dx / 2.0)
    diag[0] = k + dx / 4.0
    diag[-1] = k + dx / 4.0
    band = np.zeros((2, n))
    band[0, 1:] = -k + dx / 4.0
    band[1] = diag
    rhs = np.zeros(n)
    rhs[:-1] += 0.5 * dx * g_cells
    rhs[1:] += 0.5 * dx * g_cells
    u = solveh_banded(band, rhs, lower=False)
    value = float(dx * np.sum(g_cells ** 2) - rhs @ u)
    return u, value


def _segment_cost_table(g_cells, dx, f_hom_coeff):
    """cost[i, j]: minimal energy of the segment spanning cells i..j-1."""
    m = g_cells.size + 1
    cost = np.full((m, m), np.inf)
    for i in range(m - 1):
        for j in range(i + 1, m):
            _, cost[i, j] = _segment_solve(g_cells[i:j], dx, f_hom_coeff)
    return cost


def no_jump_energy(z, f_hom_coeff):
    """Closed form of the jump-free step competitor.

    For the datum z*1(x>1/2) on (0,1) the Euler-Lagrange problem
    -f u'' + u = g with natural ends has per-side energy
    (z/2)^2 sqrt(f) tanh(1/(2 sqrt(f))).
    """
    root = np.sqrt(f_hom_coeff)
    return 0.5 * z ** 2 * root * np.tanh(0.5 / root)


def M_ell_1d(datum, q=2.0, f_hom_coeff=1.0, g_hom_value=2.0, max_jumps=1,
             grid=128):
    """Exact 1D limit minimization over at most max_jumps jumps on (0, 1).

    Jump locations range over the interior nodes of a uniform grid; dynamic
    programming over the segment-cost table finds the global minimum.  Ties
    resolve lexicographically on (value, jump count, locations): smaller k
    wins at equal value, then the leftmost locations (argmin takes the first
    minimizer).
    """
    if float(q) != 2.0:
        raise UnsupportedError(
            f"only the quadratic fidelity q=2 is supported, got q={q}")
    if not 0 <= int(max_jumps) <= _MAX_JUMPS:
        raise UnsupportedError(
            f"max_jumps must be at most {_MAX_JUMPS}, got {max_jumps}")
    if not f_hom_coeff > 0:
        raise InputError(f"f_hom_coeff must be positive, got {f_hom_coeff}")
    if not g_hom_value >= 0:
        raise InputError(f"g_hom_value must be >= 0, got {g_hom_value}")
    n = int(grid)
    if n < 2:
        raise InputError(f"location grid needs at least 2 cells, got {n}")
    x = np.linspace(0.0, 1.0, n + 1)
    mx = 0.5 * (x[:-1] + x[1:])
    if callable(datum):
        g = np.asarray(datum(mx), dtype=float)
    else:
        nodal = np.asarray(datum, dtype=float).ravel()
        if nodal.shape != x.shape:
            raise InputError(
                f"datum must provide {x.size} nodal values, got {nodal.shape}")
        g = 0.5 * (nodal[:-1] + nodal[1:])
    if g.shape != mx.shape or not np.isfinite(g).all():
        raise InputError("datum must be finite with one value per cell")

    dx = float(x[1] - x[0])
    cost = _segment_cost_table(g, dx, float(f_hom_coeff))
    max_jumps = int(max_jumps)

    # best[j][i]: minimal cost of [0, x_i] with j jumps, the last one at x_i
    best_val = 0.0 + cost[0, n]
    best_jumps = ()
    layer = cost[0, :].copy()          # j = 1 candidate prefix costs
    trace = [None]
    for k in range(1, max_jumps + 1):
        finish = layer + cost[:, n]
        finish[0] = np.inf
        finish[n] = np.inf
        i_best = int(np.argmin(finish))
        total = finish[i_best] + k * float(g_hom_value)
        if total < best_val - 1e-15:
            jumps = [i_best]
            for tr in reversed(trace[1:]):
                jumps.append(int(tr[jumps[-1]]))
            best_val = total
            best_jumps = tuple(x[i] for i in reversed(jumps))
        if k == max_jumps:
            break
        prev = layer[:, None] + cost    # prev[i', i]
        prev[0, :] = np.inf
        prev[n, :] = np.inf
        trace.append(np.argmin(prev, axis=0))
        layer = np.min(prev, axis=0)

    # reconstruct the minimizer's segments
    bounds = (0.0,) + best_jumps + (1.0,)
    nodes, values = [], []
    for a, b in zip(bounds[:-1], bounds[1:]):
        ia = int(round(a * n))
        ib = int(round(b * n))
        u, _ = _segment_solve(g[ia:ib], dx, float(f_hom_coeff))
        nodes.append(x[ia:ib + 1])
        values.append(u)
    minimizer = JumpField1D(breakpoints=best_jumps,
                            nodes=tuple(nodes), values=tuple(values))
    return float(best_val), minimizer
