"""Dormand-Prince 5(4) embedded Runge-Kutta step with error control helpers.

Only the single step and the step-size update live here; the drivers in
``integrate`` own the acceptance logic (branch continuity, events).
"""

from __future__ import annotations

from typing import Callable

import numpy as np

__all__ = ["dopri_step", "error_norm", "next_step", "hermite"]

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


def dopri_step(
    f: Callable[[float, np.ndarray], np.ndarray],
    t: float,
    y: np.ndarray,
    h: float,
    k1: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, list[np.ndarray]]:
    """One step of size h. Returns (y_new, error estimate, stage slopes).

    The last stage is the slope at y_new (first-same-as-last), so callers can
    reuse it as ``k1`` of the next step.
    """
    ks = [f(t, y) if k1 is None else k1]
    for i in range(1, 7):
        yi = y + h * sum(a * k for a, k in zip(_A[i], ks))
        ks.append(f(t + _C[i] * h, yi))
    y_new = y + h * sum(b * k for b, k in zip(_B5[:6], ks[:6]))
    err = h * sum(e * k for e, k in zip(_E, ks))
    return y_new, err, ks


def error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, atol: float, rtol: float) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def next_step(h: float, err: float, order: int = 5) -> float:
    """Standard controller with safety factor 0.9 and growth clamped to [0.2, 5]."""
    if err == 0.0:
        return h * 5.0
    return h * min(5.0, max(0.2, 0.9 * err ** (-1.0 / order)))


def hermite(t0: float, y0: np.ndarray, d0: np.ndarray, t1: float, y1: np.ndarray,
            d1: np.ndarray, t: float) -> np.ndarray:
    """Cubic Hermite interpolation between two samples with known slopes."""
    h = t1 - t0
    s = (t - t0) / h
    h00 = 2 * s**3 - 3 * s**2 + 1
    h10 = s**3 - 2 * s**2 + s
    h01 = -2 * s**3 + 3 * s**2
    h11 = s**3 - s**2
    return h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
