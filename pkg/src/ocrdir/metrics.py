"""Registration quality measures.

All images are intensity fields on the same grid, normalized to [0, 1]
(so the dynamic range L is 1 throughout). ``re_ssd`` compares the residual
after registration against the residual before it; ``ssim`` is the global
(single-window) structural similarity; ``psnr`` the usual log-scale MSE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedDenominatorError

__all__ = ["MetricsReport", "psnr", "re_ssd", "ssim"]

_C1 = 0.01**2
_C2 = 0.03**2


@dataclass(frozen=True)
class MetricsReport:
    """Summary of a finished registration run."""

    re_ssd: float
    ssim: float
    psnr: float
    det_mean: float
    det_min: float
    det_max: float
    r_min: float
    runtime_s: float


def re_ssd(T: np.ndarray, R: np.ndarray, T_def: np.ndarray) -> float:
    """Relative SSD: residual energy after deformation over the one before.

    The cell-area factors cancel, so plain sums are used. Raises
    :class:`UndefinedDenominatorError` when T and R are identical (the
    "before" residual is zero and the ratio meaningless).
    """
    denom = float(np.sum((T - R) ** 2))
    if denom == 0.0:
        raise UndefinedDenominatorError("re_ssd undefined: template equals reference")
    return float(np.sum((T_def - R) ** 2)) / denom


def ssim(R: np.ndarray, T_def: np.ndarray) -> float:
    """Global structural similarity over a single whole-image window."""
    mu_r = float(np.mean(R))
    mu_t = float(np.mean(T_def))
    var_r = float(np.mean((R - mu_r) ** 2))
    var_t = float(np.mean((T_def - mu_t) ** 2))
    cov = float(np.mean((R - mu_r) * (T_def - mu_t)))
    num = (2 * mu_r * mu_t + _C1) * (2 * cov + _C2)
    den = (mu_r**2 + mu_t**2 + _C1) * (var_r + var_t + _C2)
    return num / den


def psnr(R: np.ndarray, T_def: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    mse = float(np.mean((R - T_def) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
