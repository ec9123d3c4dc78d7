"""One-dimensional transition profiles.

Two families live here: the truncated optimal-profile problem

    min { sum ((1 - v)^2 + lam * v'^2) * dt : v(0) = 0, v(T) = 1 },

whose value tends to sqrt(lam) as T grows (half-line minimizer
1 - exp(-t/sqrt(lam))), and the explicit smoothstep boundary pair used as
Dirichlet data by the interface-energy solver.  The pair is built so that
v vanishes on the support of u', making the cross term v*u' identically
zero, and both functions are constant outside |t| <= 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .errors import InputError, InternalError
from .geometry import Direction

__all__ = [
    "ProfileSolution",
    "optimal_profile",
    "hyperbolic_value",
    "smoothstep",
    "boundary_pair",
    "scaled_boundary_pair",
]

_BOX_TOL = 1e-10


@dataclass(frozen=True)
class ProfileSolution:
    """Minimizer of the truncated transition problem on [0, T].

    value is the exact energy of the piecewise-linear minimizer, so it is an
    upper bound for the continuum optimum and decreases under refinement.
    """

    lam: float
    truncation: float
    value: float
    nodes: np.ndarray
    samples: np.ndarray

    @property
    def halfline_value(self):
        """Optimum of the untruncated problem, sqrt(lam)."""
        return float(np.sqrt(self.lam))

    def halfline_profile(self, t):
        """Closed-form half-line minimizer 1 - exp(-t/sqrt(lam))."""
        return 1.0 - np.exp(-np.asarray(t, dtype=float) / np.sqrt(self.lam))

    def hyperbolic_value(self):
        """Exact optimum of the truncated two-point problem."""
        return hyperbolic_value(self.lam, self.truncation)


def hyperbolic_value(lam, truncation):
    """Exact value of the clamped transition problem on [0, T].

    With w = 1 - v the Euler-Lagrange equation is lam * w'' = w with
    w(0) = 1, w(T) = 0; integrating the energy by parts leaves only the
    flux at 0, which evaluates to sqrt(lam) / tanh(T / sqrt(lam)).
    """
    if lam <= 0:
        raise InputError(f"profile weight must be positive, got {lam}")
    if truncation <= 0:
        raise InputError(f"truncation length must be positive, got {truncation}")
    root = float(np.sqrt(lam))
    return root / np.tanh(truncation / root)


def optimal_profile(lam, truncation, grid_size):
    """Solve the clamped transition problem on [0, T] with `grid_size` cells.

    The energy of the piecewise-linear interpolant is integrated exactly,
    so minimization is a symmetric tridiagonal solve.  The box constraint
    0 <= v <= 1 is not imposed; it is checked afterwards because the
    unconstrained minimizer of this convex problem satisfies it.
    """
    lam = float(lam)
    truncation = float(truncation)
    if lam <= 0:
        raise InputError(f"profile weight must be positive, got {lam}")
    if truncation <= 0:
        raise InputError(f"truncation length must be positive, got {truncation}")
    grid_size = int(grid_size)
    if grid_size < 8:
        raise InputError(f"grid_size must be at least 8, got {grid_size}")

    h = truncation / grid_size
    nodes = np.linspace(0.0, truncation, grid_size + 1)

    # Work in w = 1 - v so the data is w(0) = 1, w(T) = 0.  Exact per-cell
    # energy: (h/3)(w_i^2 + w_i w_{i+1} + w_{i+1}^2) + (lam/h)(w_{i+1}-w_i)^2.
    diag_coeff = 4.0 * h / 3.0 + 4.0 * lam / h
    off_coeff = h / 3.0 - 2.0 * lam / h

    n_int = grid_size - 1
    w = np.empty(grid_size + 1)
    w[0] = 1.0
    w[-1] = 0.0
    if n_int > 0:
        ab = np.zeros((2, n_int))
        ab[0, 1:] = off_coeff
        ab[1, :] = diag_coeff
        rhs = np.zeros(n_int)
        rhs[0] = -off_coeff * w[0]
        w[1:-1] = solveh_banded(ab, rhs)

    left, right = w[:-1], w[1:]
    value = float(np.sum((h / 3.0) * (left**2 + left * right + right**2)
                         + (lam / h) * (right - left) ** 2))

    v = 1.0 - w
    if v.min() < -_BOX_TOL or v.max() > 1.0 + _BOX_TOL:
        raise InternalError("unconstrained profile minimizer left [0, 1]; "
                            f"range [{v.min():.3e}, {v.max():.3e}]")
    return ProfileSolution(lam=lam, truncation=truncation, value=value,
                           nodes=nodes, samples=np.clip(v, 0.0, 1.0))


def smoothstep(s):
    """Cubic 3s^2 - 2s^3 clamped to [0, 1]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def boundary_pair(nu, t):
    """Evaluate the fixed boundary profile pair at signed distance t.

    u ramps from 0 to 1 across |t| <= 1/2 (cubic smoothstep); v vanishes
    there and ramps back to 1 on 1/2 <= |t| <= 1.  Both are constant
    beyond |t| = 1 and v * u' = 0 everywhere.
    """
    if not isinstance(nu, Direction):
        Direction(nu)
    t = np.asarray(t, dtype=float)
    u = smoothstep(t + 0.5)
    v = smoothstep(2.0 * np.abs(t) - 1.0)
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def scaled_boundary_pair(nu, eps, zeta, x):
    """Boundary pair at t = (x . nu) / eps, with the u component scaled by zeta."""
    if eps <= 0:
        raise InputError(f"profile scale must be positive, got {eps}")
    if not isinstance(nu, Direction):
        nu = Direction(nu)
    x = np.asarray(x, dtype=float)
    if nu.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        dot = x
    else:
        dot = x @ nu.vector
    u, v = boundary_pair(nu, dot / eps)
    if np.ndim(u) == 0:
        return float(zeta) * u, v
    return float(zeta) * u, v
