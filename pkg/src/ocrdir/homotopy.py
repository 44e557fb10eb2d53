"""Mass homotopies h(omega, t), the smoothed mass field g, and step scaling.

The mass carried to a deformed point is approximated by a truncated Gaussian
sum over the fixed cell-center lattice with unit source density,

    g(omega) = h_x h_y / (2 pi sigma^2) * sum_kl exp(-|y_kl - omega|^2 / 2 sigma^2),

restricted to lattice points inside the Euclidean ball of radius
window_radius * sigma around the query and clamped below at 1e-6 so h and
the step scaling alpha stay finite.  The composite variants interpolate
between the initial mass g0 and the current mass g:

    P1  (1-t) g0 + t g           P2  g0 exp(t ln(g/g0))
    P3  (1-t) detJ + t g         P4  g

dh_dt is the partial in t with the spatial state frozen; the advected part
of the material derivative is carried separately by the flow.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateHomotopyError
from .field import GridSpec

_MASS_FLOOR = 1e-6


class CompositeKind(enum.Enum):
    P1 = "p1"
    P2 = "p2"
    P3 = "p3"
    P4 = "p4"


@dataclass(frozen=True)
class MassParams:
    """Parameters of the smoothed mass approximation.

    g0 is the initial mass field used by the composites; None means the
    caller computes it (the registration engine evaluates the mass of the
    identity so that an unmoved grid carries exactly its starting mass).
    """

    sigma_eps: float = 0.01
    g0: np.ndarray | None = None
    window_radius: float = 4.0

    def __post_init__(self) -> None:
        if self.sigma_eps <= 0:
            raise ValueError("sigma_eps must be positive")
        if self.window_radius <= 0:
            raise ValueError("window_radius must be positive")


def approx_mass(grid: GridSpec, omega: np.ndarray, p: MassParams) -> np.ndarray:
    """Smoothed mass at query positions `omega` ((2, ...) array).

    Returns an array with the trailing shape of `omega`.
    """
    if omega.ndim < 1 or omega.shape[0] != 2:
        raise ValueError(f"positions must have leading axis 2, got {omega.shape}")
    out_shape = omega.shape[1:]
    qx = np.asarray(omega[0], dtype=np.float64).ravel()
    qy = np.asarray(omega[1], dtype=np.float64).ravel()

    sig = p.sigma_eps
    rad = p.window_radius * sig
    r2 = rad * rad
    # nearest lattice index per query, then enough integer offsets to cover
    # the ball (+0.5 covers the rounding slack)
    wx = int(math.ceil(rad / grid.h_x + 0.5))
    wy = int(math.ceil(rad / grid.h_y + 0.5))
    ci = np.rint(qx * grid.m).astype(np.intp)
    cj = np.rint(qy * grid.n).astype(np.intp)

    acc = np.zeros(qx.shape, dtype=np.float64)
    for di in range(-wx, wx + 1):
        k = ci + di
        k_ok = (k >= 1) & (k <= grid.m)
        dx = k * grid.h_x - qx
        for dj in range(-wy, wy + 1):
            l = cj + dj
            dy = l * grid.h_y - qy
            d2 = dx * dx + dy * dy
            mask = k_ok & (l >= 1) & (l <= grid.n) & (d2 <= r2)
            acc += np.where(mask, np.exp(-d2 / (2 * sig * sig)), 0.0)

    acc *= grid.h_x * grid.h_y / (2 * np.pi * sig * sig)
    return np.maximum(acc, _MASS_FLOOR).reshape(out_shape)


def composite_h(
    kind: CompositeKind,
    t: float,
    g0: np.ndarray,
    g: np.ndarray,
    detJ: np.ndarray | None = None,
) -> np.ndarray:
    if kind is CompositeKind.P1:
        h = (1.0 - t) * g0 + t * g
    elif kind is CompositeKind.P2:
        if np.any(g0 <= 0) or np.any(g <= 0):
            raise DegenerateHomotopyError("P2 requires strictly positive masses")
        h = g0 * np.exp(t * np.log(g / g0))
    elif kind is CompositeKind.P3:
        if detJ is None:
            raise ValueError("detJ is required for the P3 composite")
        h = (1.0 - t) * detJ + t * g
    else:
        h = np.array(g, copy=True)
    if np.any(h <= 0):
        raise DegenerateHomotopyError(
            f"composite {kind.name} produced a non-positive mass at t={t}"
        )
    return h


def dh_dt(
    kind: CompositeKind,
    t: float,
    g0: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    detJ: np.ndarray | None = None,
) -> np.ndarray:
    if kind is CompositeKind.P1:
        return g - g0
    if kind is CompositeKind.P2:
        return h * np.log(g / g0)
    if kind is CompositeKind.P3:
        if detJ is None:
            raise ValueError("detJ is required for the P3 composite")
        return g - detJ
    return np.zeros_like(g)


def alpha(dt: float, h: np.ndarray) -> np.ndarray:
    """Step scaling alpha = dt / h; the registration linearizes the warp as
    omega + alpha * u."""
    if np.any(h <= 0):
        raise DegenerateHomotopyError("step scaling needs a positive mass h")
    return dt / h
