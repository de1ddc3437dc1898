"""Scalar maximization by coarse grid search plus golden-section refinement.

The concentrated SAR likelihood can be flat or multimodal for weak signals,
so the optimizer always scans a grid first and only then refines the best
bracket; it never assumes unimodality globally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class ScalarMaxResult:
    x: float
    fx: float
    iterations: int
    converged: bool
    boundary_hit: bool


def grid_then_golden(f: Callable[[float], float], lo: float, hi: float,
                     grid_points: int = 41, tol: float = 1e-8,
                     max_iter: int = 200) -> ScalarMaxResult:
    """Maximize f on [lo, hi]; returns the refined grid argmax."""
    grid = np.linspace(lo, hi, grid_points)
    vals = np.array([f(x) for x in grid])
    best = int(np.argmax(vals))
    a = grid[max(best - 1, 0)]
    b = grid[min(best + 1, grid_points - 1)]

    # golden-section on the bracket around the best grid point
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while (b - a) > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
        it += 1
    x = 0.5 * (a + b)
    fx = f(x)
    # keep the grid argmax if refinement somehow lost it
    if vals[best] > fx:
        x, fx = float(grid[best]), float(vals[best])
    boundary = (hi - abs(x)) < 1e-6
    return ScalarMaxResult(x=float(x), fx=float(fx), iterations=it,
                           converged=(b - a) <= tol, boundary_hit=boundary)
