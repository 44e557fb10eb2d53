"""Cell-centered grids and the finite-difference operators used everywhere else.

Conventions (shared by the whole package):

* The domain is the unit square. A grid of m x n cells has centers
  (i*h_x, j*h_y) for logical indices i=1..m, j=1..n with h_x=1/m, h_y=1/n.
  Arrays are stored 0-based, so ``arr[i-1, j-1]`` holds cell (i, j); axis 0
  runs along x, axis 1 along y.
* Scalar fields are float64 arrays of shape (m, n); vector fields and
  deformations (arrays of positions) use shape (2, m, n) with component 1 = x.
* All stencils are plain second-order central differences. Ghost cells are
  never stored: the two boundary treatments are materialized on demand by
  padding (mirror ghosts copy the adjacent interior value, zero ghosts are 0).
* Displacement increments obey the "increment" boundary conditions: mirrored
  ghost values around the grid, with the domain edge itself held at zero.
  :func:`apply_increment_bc` exposes the resulting ghost layer; the elliptic
  solver in :mod:`ocrdir.almm` additionally pins the outermost cell ring.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidGridError, ShapeError


class BC(enum.Enum):
    """Ghost-cell flavors for scalar gradients."""

    NEUMANN_MIRROR = "mirror"
    ZERO_GHOST = "zero"


@dataclass(frozen=True)
class GridSpec:
    """Uniform cell-centered mesh on the unit square."""

    m: int
    n: int

    def __post_init__(self):
        if self.m < 3 or self.n < 3:
            raise InvalidGridError(f"grid must be at least 3x3, got {self.m}x{self.n}")

    @property
    def h_x(self) -> float:
        return 1.0 / self.m

    @property
    def h_y(self) -> float:
        return 1.0 / self.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    def cell_centers(self) -> np.ndarray:
        """Positions of all cell centers, shape (2, m, n)."""
        x = np.arange(1, self.m + 1) * self.h_x
        y = np.arange(1, self.n + 1) * self.h_y
        X, Y = np.meshgrid(x, y, indexing="ij")
        return np.stack([X, Y])

    def identity(self) -> np.ndarray:
        """The identity deformation (alias of :meth:`cell_centers`)."""
        return self.cell_centers()


def scalar_field(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Validate and return a float64 scalar field for ``grid``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != grid.shape:
        raise ShapeError(f"scalar field must be {grid.shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("scalar field contains non-finite values")
    return arr


def vector_field(grid: GridSpec, values: np.ndarray) -> np.ndarray:
    """Validate and return a float64 vector field (2, m, n) for ``grid``."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (2, grid.m, grid.n):
        raise ShapeError(f"vector field must be (2, {grid.m}, {grid.n}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("vector field contains non-finite values")
    return arr


def _pad(values: np.ndarray, bc: BC) -> np.ndarray:
    if bc is BC.NEUMANN_MIRROR:
        return np.pad(values, 1, mode="edge")
    return np.pad(values, 1, mode="constant")


def grad(grid: GridSpec, v: np.ndarray, bc: BC = BC.NEUMANN_MIRROR) -> np.ndarray:
    """Central-difference gradient of a scalar field, shape (2, m, n)."""
    v = scalar_field(grid, v)
    vp = _pad(v, bc)
    gx = (vp[2:, 1:-1] - vp[:-2, 1:-1]) / (2 * grid.h_x)
    gy = (vp[1:-1, 2:] - vp[1:-1, :-2]) / (2 * grid.h_y)
    return np.stack([gx, gy])


def div(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Central-difference divergence of a vector field (increment ghosts)."""
    u = vector_field(grid, u)
    p0 = _pad(u[0], BC.NEUMANN_MIRROR)
    p1 = _pad(u[1], BC.NEUMANN_MIRROR)
    dx = (p0[2:, 1:-1] - p0[:-2, 1:-1]) / (2 * grid.h_x)
    dy = (p1[1:-1, 2:] - p1[1:-1, :-2]) / (2 * grid.h_y)
    return dx + dy


def laplacian_scalar(grid: GridSpec, v: np.ndarray) -> np.ndarray:
    """5-point Laplacian of a scalar field with mirror ghosts."""
    v = scalar_field(grid, v)
    vp = _pad(v, BC.NEUMANN_MIRROR)
    core = vp[1:-1, 1:-1]
    xx = (vp[:-2, 1:-1] - 2 * core + vp[2:, 1:-1]) / grid.h_x**2
    yy = (vp[1:-1, :-2] - 2 * core + vp[1:-1, 2:]) / grid.h_y**2
    return xx + yy


def laplacian(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Componentwise 5-point Laplacian of a vector field (increment ghosts)."""
    u = vector_field(grid, u)
    return np.stack([laplacian_scalar(grid, u[0]), laplacian_scalar(grid, u[1])])


def apply_increment_bc(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Ghost accessor for displacement increments.

    Returns the (2, m+2, n+2) array whose outer layer holds the mirrored ghost
    values; the interior block is the input unchanged. Ghosts are computed on
    access, never stored.
    """
    u = vector_field(grid, u)
    return np.stack([_pad(u[0], BC.NEUMANN_MIRROR), _pad(u[1], BC.NEUMANN_MIRROR)])


def zero_ring(u: np.ndarray) -> np.ndarray:
    """Copy of a (...,m,n) array with the outermost cell ring set to zero."""
    out = np.array(u, copy=True)
    out[..., 0, :] = 0.0
    out[..., -1, :] = 0.0
    out[..., :, 0] = 0.0
    out[..., :, -1] = 0.0
    return out
