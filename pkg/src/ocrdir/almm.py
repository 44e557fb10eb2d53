"""Inner augmented-Lagrangian iteration at a fixed flow time.

Each sweep linearizes the warped image about the previous increment
(semi-implicit lagging), so the update solves the linear elliptic system

    L u = r,   L = -laplacian - (beta/tau) grad(div .) + (1/gamma) I,

on the interior cells with the outermost cell ring held at zero (the
discrete ghost identities pin the increment to zero there).  On that
subspace L is symmetric positive definite, so the system is solved by
matrix-free conjugate gradients with a Jacobi preconditioner; the stencil
diagonal is constant per component, 2/h_x^2 + 2/h_y^2 + (beta/tau)/(2 h_l^2)
+ 1/gamma.  The multiplier then takes one ascent step

    lambda' = lambda - beta (div u + dh/dt).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .errors import SolverFailureError
from .field import BC, GridSpec, div, grad, laplacian, zero_ring
from .sampler import gradient_at, sample_bicubic


@dataclass(frozen=True)
class AlmmParams:
    tau: float = 5.0
    beta: float = 0.01
    gamma: float = 0.01
    max_inner: int = 5
    tol: float = 1e-6
    cg_tol: float = 1e-8
    cg_max: int = 500

    def __post_init__(self) -> None:
        if min(self.tau, self.beta, self.gamma) <= 0:
            raise ValueError("tau, beta, gamma must be positive")
        if self.max_inner < 1 or self.cg_max < 1:
            raise ValueError("iteration limits must be at least 1")


@dataclass
class InnerState:
    """Carrier for the increment u, multiplier lambda, and the iterate u0
    frozen at inner-loop entry (the anchor of the relative-change stop)."""

    u: np.ndarray
    lam: np.ndarray
    u0: np.ndarray | None = dfield(default=None)


def operator_apply(grid: GridSpec, u: np.ndarray, p: AlmmParams) -> np.ndarray:
    """Apply L to a ring-zero increment; the output ring is zeroed because
    the equations live on interior cells only."""
    out = -laplacian(grid, u) - (p.beta / p.tau) * grad(grid, div(grid, u)) + u / p.gamma
    return zero_ring(out)


def _jacobi_diag(grid: GridSpec, p: AlmmParams) -> np.ndarray:
    base = 2.0 / grid.h_x**2 + 2.0 / grid.h_y**2 + 1.0 / p.gamma
    d1 = base + (p.beta / p.tau) / (2.0 * grid.h_x**2)
    d2 = base + (p.beta / p.tau) / (2.0 * grid.h_y**2)
    return np.array([d1, d2]).reshape(2, 1, 1)


def solve_increment(
    grid: GridSpec,
    r: np.ndarray,
    p: AlmmParams,
    u0: np.ndarray | None = None,
) -> np.ndarray:
    """Solve L u = r by preconditioned CG to ||L u - r|| <= cg_tol ||r||."""
    b = zero_ring(r)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)

    minv = 1.0 / _jacobi_diag(grid, p)
    x = zero_ring(u0) if u0 is not None else np.zeros_like(b)
    res = b - operator_apply(grid, x, p)
    z = minv * res
    d = z
    rz = np.sum(res * z)
    for _ in range(p.cg_max):
        if np.linalg.norm(res) <= p.cg_tol * bnorm:
            break
        Ld = operator_apply(grid, d, p)
        step = rz / np.sum(d * Ld)
        x = x + step * d
        res = res - step * Ld
        z = minv * res
        rz_new = np.sum(res * z)
        d = z + (rz_new / rz) * d
        rz = rz_new

    true_res = np.linalg.norm(operator_apply(grid, x, p) - b) / bnorm
    if true_res > p.cg_tol:
        raise SolverFailureError(
            f"CG stalled at relative residual {true_res:.3e}",
            residual=float(true_res),
            iterations=p.cg_max,
        )
    return x


def residual_r(
    grid: GridSpec,
    T_warped: np.ndarray,
    R: np.ndarray,
    gradT_warped: np.ndarray,
    lam: np.ndarray,
    dhdt: np.ndarray,
    u_prev: np.ndarray,
    alpha: np.ndarray,
    p: AlmmParams,
) -> np.ndarray:
    """Right-hand side of the increment system, assembled at the lagged
    iterate: data force + constraint force + proximal anchor."""
    data = -(alpha / p.tau) * (T_warped - R) * gradT_warped
    constraint = -(p.beta / p.tau) * grad(grid, -dhdt + lam / p.beta, BC.NEUMANN_MIRROR)
    return data + constraint + u_prev / p.gamma


def update_multiplier(
    grid: GridSpec,
    lam: np.ndarray,
    u: np.ndarray,
    dhdt: np.ndarray,
    beta: float,
) -> np.ndarray:
    return lam - beta * (div(grid, u) + dhdt)


def inner_loop(
    grid: GridSpec,
    T: np.ndarray,
    R: np.ndarray,
    omega: np.ndarray,
    alpha: np.ndarray,
    dhdt: np.ndarray,
    state: InnerState,
    p: AlmmParams,
    trace: list[dict] | None = None,
) -> tuple[InnerState, int]:
    """Run up to max_inner (u, lambda) updates at a fixed flow time.

    Stops early when ||u_new - u|| / ||u_new - u0|| < tol; a vanishing
    denominator means the iterate did not move and counts as converged.
    """
    u = state.u
    lam = state.lam
    u0 = u.copy()
    iterations = 0
    for _ in range(p.max_inner):
        pos = omega + alpha[None] * u
        T_w = sample_bicubic(grid, T, pos)
        gT_w = gradient_at(grid, T, pos)
        r = residual_r(grid, T_w, R, gT_w, lam, dhdt, u, alpha, p)
        u_new = solve_increment(grid, r, p, u0=u)
        lam = update_multiplier(grid, lam, u_new, dhdt, p.beta)
        iterations += 1

        num = np.linalg.norm(u_new - u)
        den = np.linalg.norm(u_new - u0)
        u = u_new
        if trace is not None:
            trace.append(
                {
                    "iteration": iterations,
                    "constraint_norm": float(np.linalg.norm(div(grid, u) + dhdt)),
                    "relative_change": float(num / den) if den > 0 else 0.0,
                }
            )
        if den == 0.0 or num / den < p.tol:
            break
    return InnerState(u=u, lam=lam, u0=u0), iterations


def augmented_energy(
    grid: GridSpec,
    T: np.ndarray,
    R: np.ndarray,
    omega: np.ndarray,
    alpha: np.ndarray,
    dhdt: np.ndarray,
    u: np.ndarray,
    lam: np.ndarray,
    p: AlmmParams,
) -> float:
    """Augmented objective whose stationarity condition is L u = r, up to the
    proximal anchor: (1/2 tau) data + smoothness + multiplier + penalty."""
    pos = omega + alpha[None] * u
    T_w = sample_bicubic(grid, T, pos)
    c = div(grid, u) + dhdt
    g1 = grad(grid, u[0], BC.NEUMANN_MIRROR)
    g2 = grad(grid, u[1], BC.NEUMANN_MIRROR)
    cell = grid.h_x * grid.h_y
    data = 0.5 / p.tau * np.sum((T_w - R) ** 2)
    smooth = 0.5 * np.sum(g1 * g1 + g2 * g2)
    lagr = -np.sum(lam * c) / p.tau
    pen = 0.5 * p.beta / p.tau * np.sum(c * c)
    return float(cell * (data + smooth + lagr + pen))
