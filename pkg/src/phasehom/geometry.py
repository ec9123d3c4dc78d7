"""Directions, rotations, and the uniform grids used by the solvers.

Rotated cubes are stored in their own (cube-intrinsic) coordinates; points
are pushed through the rotation only when a periodic coefficient has to be
evaluated, so irrational directions never require resampling a field.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

__all__ = [
    "Direction",
    "build_rotation",
    "jump_function",
    "RotatedCubeGrid",
    "TorusGrid",
    "BoxGrid",
]

_UNIT_TOL = 1e-12


@dataclass(frozen=True)
class Direction:
    """Unit vector in dimension 1 or 2."""

    components: tuple

    def __init__(self, components):
        vec = tuple(float(c) for c in np.atleast_1d(np.asarray(components, dtype=float)))
        if len(vec) not in (1, 2):
            raise InputError(f"directions must have dimension 1 or 2, got {len(vec)}")
        norm = float(np.hypot(*vec)) if len(vec) == 2 else abs(vec[0])
        if norm == 0.0:
            raise InputError("zero vector is not a direction")
        if abs(norm - 1.0) > _UNIT_TOL:
            raise InputError(f"direction must be unit length within {_UNIT_TOL:g}, "
                             f"|v| = {norm!r}")
        object.__setattr__(self, "components", vec)

    @classmethod
    def from_angle(cls, theta):
        """2D direction at angle theta from the first axis."""
        return cls((np.cos(theta), np.sin(theta)))

    @property
    def dimension(self):
        return len(self.components)

    @property
    def vector(self):
        return np.array(self.components)

    @property
    def angle(self):
        if self.dimension != 2:
            raise InputError("angle is defined for 2D directions only")
        return float(np.arctan2(self.components[1], self.components[0]))

    def antipode(self):
        return Direction(tuple(-c for c in self.components))

    @property
    def upper_hemisphere(self):
        """True when the last nonzero component is positive."""
        for c in reversed(self.components):
            if c != 0.0:
                return c > 0.0
        raise InputError("zero vector is not a direction")


def build_rotation(nu):
    """Orthogonal matrix mapping the last coordinate axis onto nu.

    In 2D the upper hemisphere uses [[nu2, nu1], [-nu1, nu2]]; the lower
    hemisphere takes the matrix of the antipode and flips the sign of the
    last column, so antipodal directions map the model cube to the same
    rotated cube.
    """
    if not isinstance(nu, Direction):
        nu = Direction(nu)
    if nu.dimension == 1:
        return np.array([[nu.components[0]]])
    if nu.upper_hemisphere:
        n1, n2 = nu.components
        return np.array([[n2, n1], [-n1, n2]])
    flipped = build_rotation(nu.antipode())
    return flipped @ np.diag([1.0, -1.0])


def jump_function(zeta, nu, x):
    """zeta on the closed halfspace {x . nu >= 0}, zero on the other side."""
    if not isinstance(nu, Direction):
        nu = Direction(nu)
    x = np.asarray(x, dtype=float)
    if nu.dimension == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        dot = x
    else:
        dot = x @ nu.vector
    return np.where(dot >= 0.0, float(zeta), 0.0)


def _axis_nodes(r, spacing):
    if r <= 0 or spacing <= 0:
        raise InputError("cube side and spacing must be positive")
    m = int(round(r / spacing)) + 1
    if m < 2:
        raise InputError(f"spacing {spacing} too coarse for side {r}")
    return np.linspace(-r / 2.0, r / 2.0, m)


@dataclass
class RotatedCubeGrid:
    """Uniform lattice on the rotated cube Q^nu_r, stored in local coordinates.

    The local frame has the first axis tangent to the interface plane and the
    second axis along nu; world coordinates are rotation @ local.
    """

    nu: Direction
    r: float
    spacing: float
    boundary_layer: float
    axis: np.ndarray = field(repr=False)
    rotation: np.ndarray = field(repr=False)

    def __init__(self, nu, r, spacing, boundary_layer=None):
        if not isinstance(nu, Direction):
            nu = Direction(nu)
        if nu.dimension != 2:
            raise InputError("rotated cube grids are built for 2D directions")
        self.nu = nu
        self.r = float(r)
        self.axis = _axis_nodes(self.r, spacing)
        self.spacing = float(self.axis[1] - self.axis[0])
        self.boundary_layer = (2.0 * self.spacing if boundary_layer is None
                               else float(boundary_layer))
        if self.boundary_layer <= 0:
            raise InputError("boundary_layer must be positive")
        self.rotation = build_rotation(nu)

    @property
    def nodes_per_axis(self):
        return self.axis.size

    def local_nodes(self):
        """Array of shape (m, m, 2), index order (tangent, normal)."""
        t, q = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([t, q], axis=-1)

    def world_nodes(self):
        return self.local_nodes() @ self.rotation.T

    def local_cell_midpoints(self):
        mid = 0.5 * (self.axis[:-1] + self.axis[1:])
        t, q = np.meshgrid(mid, mid, indexing="ij")
        return np.stack([t, q], axis=-1)

    def world_cell_midpoints(self):
        return self.local_cell_midpoints() @ self.rotation.T

    def to_world(self, local_points):
        return np.asarray(local_points, dtype=float) @ self.rotation.T

    def boundary_mask(self):
        """Nodes within boundary_layer of the cube boundary (local sup norm)."""
        pts = self.local_nodes()
        lim = self.r / 2.0 - self.boundary_layer
        return np.maximum(np.abs(pts[..., 0]), np.abs(pts[..., 1])) > lim + 1e-12


@dataclass
class TorusGrid:
    """Uniform periodic grid on the unit torus: N cells per axis, spacing 1/N."""

    dimension: int
    n_cells: int

    def __init__(self, dimension, n_cells):
        if dimension not in (1, 2):
            raise InputError("torus grids support dimension 1 and 2")
        if n_cells < 2:
            raise InputError("need at least 2 cells per axis")
        self.dimension = int(dimension)
        self.n_cells = int(n_cells)

    @property
    def spacing(self):
        return 1.0 / self.n_cells

    def node_coordinates(self):
        ax = np.arange(self.n_cells) * self.spacing
        if self.dimension == 1:
            return ax
        x, y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([x, y], axis=-1)

    def cell_midpoints(self):
        ax = (np.arange(self.n_cells) + 0.5) * self.spacing
        if self.dimension == 1:
            return ax
        x, y = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([x, y], axis=-1)

    def wrap(self, idx):
        return np.mod(idx, self.n_cells)


@dataclass
class BoxGrid:
    """Axis-aligned uniform grid over a box, nodes at the lattice points."""

    origin: tuple
    lengths: tuple
    n_cells: tuple

    def __init__(self, origin, lengths, n_cells):
        origin = tuple(float(o) for o in np.atleast_1d(origin))
        lengths = tuple(float(s) for s in np.atleast_1d(lengths))
        n_cells = tuple(int(m) for m in np.atleast_1d(n_cells))
        if not (len(origin) == len(lengths) == len(n_cells)):
            raise InputError("origin, lengths and n_cells must share a dimension")
        if len(origin) not in (1, 2):
            raise InputError("box grids support dimension 1 and 2")
        if any(s <= 0 for s in lengths) or any(m < 1 for m in n_cells):
            raise InputError("box lengths must be positive and cell counts >= 1")
        spacings = {round(s / m, 15) for s, m in zip(lengths, n_cells)}
        if len(spacings) != 1:
            raise InputError("box grids must have equal spacing on every axis")
        self.origin = origin
        self.lengths = lengths
        self.n_cells = n_cells

    @property
    def dimension(self):
        return len(self.origin)

    @property
    def spacing(self):
        return self.lengths[0] / self.n_cells[0]

    @property
    def node_shape(self):
        return tuple(m + 1 for m in self.n_cells)

    def axis_nodes(self, i):
        return self.origin[i] + self.spacing * np.arange(self.n_cells[i] + 1)

    def nodes(self):
        axes = [self.axis_nodes(i) for i in range(self.dimension)]
        if self.dimension == 1:
            return axes[0]
        x, y = np.meshgrid(*axes, indexing="ij")
        return np.stack([x, y], axis=-1)

    def cell_midpoints(self):
        axes = [self.axis_nodes(i)[:-1] + 0.5 * self.spacing
                for i in range(self.dimension)]
        if self.dimension == 1:
            return axes[0]
        x, y = np.meshgrid(*axes, indexing="ij")
        return np.stack([x, y], axis=-1)
