"""Exception types shared across the package.

The CLI maps these onto process exit codes (see cli.main): bad inputs exit
with 2, a failed linear solve with 3, a failed mesh correction with 4.
"""

from __future__ import annotations


class OcrdirError(Exception):
    """Base class for all package errors."""


class InvalidGridError(OcrdirError):
    """Grid is too small or otherwise unusable (m, n must be >= 3)."""


class ShapeError(OcrdirError):
    """An array does not have the shape/dtype the grid demands."""


class DegenerateHomotopyError(OcrdirError):
    """A composite intermediate density h came out non-positive."""


class SolverFailureError(OcrdirError):
    """Conjugate gradients did not reach the requested residual.

    Carries the achieved relative residual and the iteration count so the
    caller can report how close the solve got.
    """

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CorrectionFailureError(OcrdirError):
    """Mesh unfolding could not push all local indicators above threshold."""


class UndefinedDenominatorError(OcrdirError):
    """A relative metric has a zero denominator (e.g. template == reference)."""


class InputError(OcrdirError):
    """A user-supplied file or argument is unusable."""
