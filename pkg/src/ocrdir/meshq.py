"""Mesh quality of a deformation: triangle ratios, fold detection, correction.

Every cell center O spans four triangles with its axis neighbors
(B = east, D = north, A = west, C = south):

    (O, B, D), (O, D, A), (O, A, C), (O, C, B)

Each triangle's signed area divided by the cell area h_x*h_y is its quality
ratio; on the identity grid every ratio is exactly 1/2, and half the sum of
the four ratios reproduces the central-difference Jacobian determinant
identically (the four cross products telescope to (B-A) x (D-C)). A negative
ratio means the local mesh has folded over itself; a small positive one means
it is close to folding. Neighbors outside the grid are pinned at their
identity coordinates, matching the zero-displacement boundary of the flow.

:func:`correct_deformation` repairs a freshly integrated deformation: if only
a few cells are bad it nudges the worst-offending grid points (fold "key
points") toward their neighborhood centroid; if many cells are bad it throws
the step away and re-integrates from the previous deformation with a halved
step size; if nothing is bad it suggests doubling the next step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .field import GridSpec

__all__ = [
    "CorrectionStatus",
    "CorrectionResult",
    "QualityReport",
    "correct_deformation",
    "det_jacobian",
    "folding_degree",
    "padded_positions",
    "triangle_ratios",
    "unfold_indicator",
]


def padded_positions(grid: GridSpec, omega: np.ndarray) -> np.ndarray:
    """(2, m+2, n+2) positions with the ghost ring pinned at identity."""
    m, n = grid.shape
    ii = np.arange(0, m + 2) * grid.h_x
    jj = np.arange(0, n + 2) * grid.h_y
    out = np.stack(np.meshgrid(ii, jj, indexing="ij"))
    out[:, 1:-1, 1:-1] = omega
    return out


def _cross(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return u[0] * v[1] - u[1] * v[0]


def triangle_ratios(grid: GridSpec, omega: np.ndarray) -> np.ndarray:
    """Ratios of the four signed triangle areas to the cell area, (4, m, n).

    Order: (O,B,D), (O,D,A), (O,A,C), (O,C,B).
    """
    P = padded_positions(grid, omega)
    O = P[:, 1:-1, 1:-1]
    A = P[:, :-2, 1:-1]
    B = P[:, 2:, 1:-1]
    C = P[:, 1:-1, :-2]
    D = P[:, 1:-1, 2:]
    a, b, c, d = A - O, B - O, C - O, D - O
    scale = 0.5 / (grid.h_x * grid.h_y)
    return scale * np.stack([_cross(b, d), _cross(d, a), _cross(a, c), _cross(c, b)])


def det_jacobian(grid: GridSpec, omega: np.ndarray) -> np.ndarray:
    """Jacobian determinant of the deformation at every cell, shape (m, n)."""
    return 0.5 * triangle_ratios(grid, omega).sum(axis=0)


@dataclass(frozen=True)
class QualityReport:
    """Per-cell mesh quality of a deformation."""

    det: np.ndarray
    R: np.ndarray
    R_min: float
    det_min: float
    det_max: float
    det_mean: float
    folded: list[tuple[int, int]]


def unfold_indicator(grid: GridSpec, omega: np.ndarray, eps: float = 1e-2) -> QualityReport:
    """Evaluate fold indicators; ``folded`` collects cells with min ratio < eps."""
    ratios = triangle_ratios(grid, omega)
    R = ratios.min(axis=0)
    det = 0.5 * ratios.sum(axis=0)
    folded = [(int(i), int(j)) for i, j in zip(*np.nonzero(R < eps))]
    return QualityReport(
        det=det,
        R=R,
        R_min=float(R.min()),
        det_min=float(det.min()),
        det_max=float(det.max()),
        det_mean=float(det.mean()),
        folded=folded,
    )


# the two off-center vertices of each triangle, as index offsets from O
_TRIANGLE_VERTS = (
    ((1, 0), (0, 1)),  # (O, B, D)
    ((0, 1), (-1, 0)),  # (O, D, A)
    ((-1, 0), (0, -1)),  # (O, A, C)
    ((0, -1), (1, 0)),  # (O, C, B)
)


def _candidate_points(grid: GridSpec, folded) -> set[tuple[int, int]]:
    """Folded cells plus their in-grid 4-neighbors."""
    m, n = grid.shape
    out: set[tuple[int, int]] = set()
    for i, j in folded:
        for di, dj in ((0, 0), (1, 0), (-1, 0), (0, 1), (0, -1)):
            p = (i + di, j + dj)
            if 0 <= p[0] < m and 0 <= p[1] < n:
                out.add(p)
    return out


def folding_degree(
    grid: GridSpec, omega: np.ndarray, folded
) -> tuple[dict[tuple[int, int], int], list[tuple[int, int]]]:
    """Count inverted triangles at each grid point and rank fold key points.

    A point's folding degree is the number of negative-ratio triangles it is a
    vertex of. Key points are the local degree maxima within the candidate set
    (folded cells and their 4-neighbors), excluding the boundary ring whose
    positions are pinned; they are returned ordered by degree, then by the
    total negative mass of their incident triangles, then lexicographically.
    """
    m, n = grid.shape
    ratios = triangle_ratios(grid, omega)
    deg: dict[tuple[int, int], int] = {}
    mag: dict[tuple[int, int], float] = {}
    for k in range(4):
        for i, j in zip(*np.nonzero(ratios[k] < 0)):
            verts = [(int(i), int(j))]
            for di, dj in _TRIANGLE_VERTS[k]:
                verts.append((int(i) + di, int(j) + dj))
            for p in verts:
                if 0 <= p[0] < m and 0 <= p[1] < n:
                    deg[p] = deg.get(p, 0) + 1
                    mag[p] = mag.get(p, 0.0) + float(-ratios[k, i, j])
    candidates = _candidate_points(grid, folded)
    keys = []
    for p in candidates:
        d = deg.get(p, 0)
        if d == 0:
            continue
        if p[0] in (0, m - 1) or p[1] in (0, n - 1):
            continue  # ring positions are pinned, never move them
        neighbor_degs = [
            deg.get((p[0] + di, p[1] + dj), 0)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
        ]
        if all(d >= nd for nd in neighbor_degs):
            keys.append(p)
    keys.sort(key=lambda p: (-deg[p], -mag.get(p, 0.0), p))
    return deg, keys


class CorrectionStatus(enum.Enum):
    CLEAN = "clean"
    CORRECTED = "corrected"
    FAILED = "failed"


@dataclass
class CorrectionResult:
    """Outcome of :func:`correct_deformation`."""

    omega: np.ndarray
    dt_taken: float
    dt_next: float
    status: CorrectionStatus
    halvings: int = 0
    moved: list[tuple[int, int]] = field(default_factory=list)


def _local_min_ratio(grid: GridSpec, omega: np.ndarray, p: tuple[int, int]) -> float:
    """Smallest ratio over the cell at ``p`` and its in-grid 4-neighbors."""
    m, n = grid.shape
    R = triangle_ratios(grid, omega).min(axis=0)
    vals = [R[p]]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        q = (p[0] + di, p[1] + dj)
        if 0 <= q[0] < m and 0 <= q[1] < n:
            vals.append(R[q])
    return float(min(vals))


def _move_key_point(
    grid: GridSpec,
    omega: np.ndarray,
    p: tuple[int, int],
    eps: float,
    max_fraction_halvings: int,
) -> bool:
    """Nudge ``p`` toward its neighborhood centroid, in place.

    Tries the full step toward the centroid of the four neighbor positions and
    halves the fraction until the five local indicators all reach ``eps``. If
    no fraction gets there, the best strictly-improving fraction is kept as a
    partial repair. Returns whether the point moved.
    """
    i, j = p
    target = (
        omega[:, i + 1, j]
        + omega[:, i - 1, j]
        + omega[:, i, j + 1]
        + omega[:, i, j - 1]
    ) / 4.0
    base = omega[:, i, j].copy()
    before = _local_min_ratio(grid, omega, p)
    best_val, best_frac = before, None
    frac = 1.0
    for _ in range(max_fraction_halvings):
        omega[:, i, j] = base + frac * (target - base)
        val = _local_min_ratio(grid, omega, p)
        if val >= eps:
            return True
        if val > best_val:
            best_val, best_frac = val, frac
        frac *= 0.5
    if best_frac is not None:
        omega[:, i, j] = base + best_frac * (target - base)
        return True
    omega[:, i, j] = base
    return False


def correct_deformation(
    grid: GridSpec,
    omega: np.ndarray,
    omega0: np.ndarray,
    dt: float,
    ctx,
    rho: float = 0.01,
    eps: float = 1e-2,
    max_halvings: int = 10,
    max_fraction_halvings: int = 20,
    max_sweeps: int = 25,
) -> CorrectionResult:
    """Validate a step ``omega0 -> omega`` taken with step size ``dt``.

    Three outcomes, decided by how much of the mesh is close to folding
    (min ratio below ``eps``):

    * nothing: the step stands and the next step may double (``Clean``);
    * more than ``rho`` of all cells (counting folded cells and their
      neighbors): the step is re-integrated from ``omega0`` with ``dt``
      halved, repeatedly, via ``ctx`` (``rk4_step``); requires ``ctx``;
    * a few cells: fold key points are moved toward their neighborhood
      centroids, sweeping until every cell's indicator clears ``eps``
      (``Corrected``) or the sweep budget runs out (``Failed``).

    ``dt_taken`` is the step size actually consumed (smaller than ``dt``
    after halvings); ``dt_next`` is the suggested size for the next step.
    """
    if dt <= 0:
        raise InputError(f"step size must be positive, got {dt}")
    m, n = grid.shape
    om = np.array(omega, copy=True)
    dt_cur = float(dt)
    halvings = 0
    moved_all: list[tuple[int, int]] = []

    while True:
        report = unfold_indicator(grid, om, eps)
        if not report.folded:
            return CorrectionResult(
                om, dt_cur, 2.0 * dt_cur, CorrectionStatus.CLEAN, halvings, moved_all
            )
        candidates = _candidate_points(grid, report.folded)
        if len(candidates) / (m * n) > rho and ctx is not None:
            if halvings >= max_halvings:
                return CorrectionResult(
                    om, dt_cur, dt_cur, CorrectionStatus.FAILED, halvings, moved_all
                )
            from .flow import rk4_step  # deferred: flow also imports this module

            dt_cur *= 0.5
            halvings += 1
            om = rk4_step(omega0, ctx, dt_cur)
            continue
        break

    # local repair: move key points, a few sweeps if corrections interact
    for _ in range(max_sweeps):
        report = unfold_indicator(grid, om, eps)
        if not report.folded:
            return CorrectionResult(
                om, dt_cur, dt_cur, CorrectionStatus.CORRECTED, halvings, moved_all
            )
        _, keys = folding_degree(grid, om, report.folded)
        if not keys:
            # no inverted triangle to rank by: fall back to the marginal
            # cells themselves, worst first (ring stays pinned)
            keys = [
                p
                for p in sorted(report.folded, key=lambda p: (report.R[p], p))
                if 0 < p[0] < m - 1 and 0 < p[1] < n - 1
            ]
        any_moved = False
        for p in keys:
            if _move_key_point(grid, om, p, eps, max_fraction_halvings):
                any_moved = True
                if p not in moved_all:
                    moved_all.append(p)
        if not any_moved:
            break

    report = unfold_indicator(grid, om, eps)
    status = CorrectionStatus.CORRECTED if not report.folded else CorrectionStatus.FAILED
    return CorrectionResult(om, dt_cur, dt_cur, status, halvings, moved_all)
