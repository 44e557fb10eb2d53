"""RK4 transport of the deformation by the velocity v = u / h.

The control increment u lives on cell centers and is frozen over a step;
stage evaluations sample it bicubically at the moving positions.  The mass
composite h is reconstructed pointwise at each stage — the smoothed mass is
evaluated at the stage positions while g0 (and detJ for the P3 composite)
stay attached to the grid labels, i.e. the particles carry their initial
mass with them.  Setting freeze_h skips the reconstruction and reuses the
entry values of h for all four stages.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .field import GridSpec
from .homotopy import CompositeKind, MassParams, approx_mass, composite_h
from .sampler import sample_bicubic


@dataclass
class VelocityContext:
    """Everything needed to evaluate v(pts, t) during one flow step.

    u, h, g0 are label-aligned (2, m, n) / (m, n) arrays; stage positions
    passed to velocity_at must be label-aligned too.
    """

    grid: GridSpec
    u: np.ndarray
    h: np.ndarray
    t: float
    kind: CompositeKind
    mass: MassParams
    g0: np.ndarray
    freeze_h: bool = False


def velocity_at(ctx: VelocityContext, pts: np.ndarray, t_query: float) -> np.ndarray:
    """v = u(pts) / h(pts, t_query) for label-aligned positions pts."""
    uval = np.stack(
        [
            sample_bicubic(ctx.grid, ctx.u[0], pts),
            sample_bicubic(ctx.grid, ctx.u[1], pts),
        ]
    )
    if ctx.freeze_h:
        h = ctx.h
    else:
        g = approx_mass(ctx.grid, pts, ctx.mass)
        detJ = None
        if ctx.kind is CompositeKind.P3:
            from .meshq import det_jacobian

            detJ = det_jacobian(ctx.grid, pts)
        h = composite_h(ctx.kind, t_query, ctx.g0, g, detJ)
    return uval / h


def rk4_core(
    omega: np.ndarray,
    vfun: Callable[[np.ndarray, float], np.ndarray],
    t: float,
    dt: float,
) -> np.ndarray:
    k1 = vfun(omega, t)
    k2 = vfun(omega + (dt / 2) * k1, t + dt / 2)
    k3 = vfun(omega + (dt / 2) * k2, t + dt / 2)
    k4 = vfun(omega + dt * k3, t + dt)
    return omega + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4_step(omega: np.ndarray, ctx: VelocityContext, dt: float) -> np.ndarray:
    """Advance the deformation one step of size dt from ctx.t."""
    return rk4_core(omega, lambda pts, tq: velocity_at(ctx, pts, tq), ctx.t, dt)
