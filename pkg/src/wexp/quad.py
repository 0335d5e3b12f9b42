"""Composite trapezoid rules on uniform grids along the last axis."""

from __future__ import annotations

import numpy as np


def trapz(y: np.ndarray, h: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return h * (np.sum(y, axis=-1) - 0.5 * (y[..., 0] + y[..., -1]))


def cumtrapz(y: np.ndarray, h: float) -> np.ndarray:
    """Running integral from the first node, same length as ``y``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    np.cumsum(0.5 * h * (y[..., 1:] + y[..., :-1]), axis=-1, out=out[..., 1:])
    return out


def tail_trapz(y: np.ndarray, h: float) -> np.ndarray:
    """``int_{t_i}^1 y`` at every node."""
    c = cumtrapz(y, h)
    return c[..., -1:] - c


def cell_integrals(y: np.ndarray, R: int, h: float) -> np.ndarray:
    """Trapezoid integral over each block of ``R`` fine cells."""
    c = cumtrapz(y, h)[..., ::R]
    return np.diff(c, axis=-1)


def integral_to(y: np.ndarray, h: float, t) -> np.ndarray:
    """``int_0^t`` of the piecewise-linear interpolant of ``y``.

    ``t`` may be an array of points (broadcast against the batch axes by a
    trailing axis). Exact for the interpolant, so windows with fractional
    endpoints are handled without snapping.
    """
    y = np.asarray(y, dtype=float)
    N = y.shape[-1] - 1
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    c = cumtrapz(y, h)
    i = np.minimum(np.floor(t * N).astype(int), N - 1)
    u = t - i * h
    yi = np.take(y, i, axis=-1)
    yj = np.take(y, i + 1, axis=-1)
    slope = (yj - yi) / h
    return np.take(c, i, axis=-1) + yi * u + 0.5 * slope * u * u


def double_trapz(F: np.ndarray, h: float) -> float:
    """Tensor-product trapezoid of a matrix ``F[t_index, s_index]``."""
    return trapz(trapz(F, h), h)
