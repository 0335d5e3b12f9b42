"""Brownian paths on refined uniform grids, Euler diffusions and jump overlays.

Arrays carry an optional leading batch axis: a ``WienerGrid`` holding a
single replication has ``values.shape == (n*R + 1,)``; a batch of
replications has shape ``(B, n*R + 1)``. Every function here works along
the last axis so both cases share one code path.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng

MAX_GRID_POINTS = 1 << 27


@dataclass
class WienerGrid:
    n: int
    R: int
    values: np.ndarray
    seed: int = 0
    rep_index: int | np.ndarray = 0

    @property
    def N(self) -> int:
        return self.n * self.R

    @property
    def fine_h(self) -> float:
        return 1.0 / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.N + 1)

    @property
    def coarse_values(self) -> np.ndarray:
        return self.values[..., :: self.R]

    @property
    def coarse_increments(self) -> np.ndarray:
        return np.diff(self.coarse_values, axis=-1)

    @property
    def fine_increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-1)

    @property
    def batched(self) -> bool:
        return self.values.ndim > 1


def _check_budget(n: int, R: int, reps: int = 1):
    if n < 2 or R < 1:
        raise ValueError("need n >= 2 and R >= 1")
    if reps * (n * R + 1) > MAX_GRID_POINTS:
        raise MemoryError(
            f"{reps} paths of {n * R + 1} points exceed the budget of {MAX_GRID_POINTS} values"
        )


def wiener_tag(n: int, R: int, purpose: str = "wiener") -> str:
    return f"{purpose}/n={n}/R={R}"


def sample_wiener(n: int, R: int, seed: int, rep_index, purpose: str = "wiener") -> WienerGrid:
    """Brownian path(s) at times ``i/(nR)``; a sequence of indices gives a batch."""
    batch = np.ndim(rep_index) > 0
    reps = np.atleast_1d(np.asarray(rep_index, dtype=np.int64))
    _check_budget(n, R, reps.size)
    N = n * R
    z = rng.normals(seed, reps, wiener_tag(n, R, purpose), N)
    values = np.zeros((reps.size, N + 1))
    np.cumsum(z * np.sqrt(1.0 / N), axis=1, out=values[:, 1:])
    if not batch:
        return WienerGrid(n, R, values[0], seed, int(reps[0]))
    return WienerGrid(n, R, values, seed, reps)


def coarse_increment(grid: WienerGrid, j: int):
    """``w(t_j) - w(t_{j-1})`` summed exactly from the fine increments."""
    if not 1 <= j <= grid.n:
        raise IndexError(f"cell index {j} outside 1..{grid.n}")
    lo, hi = (j - 1) * grid.R, j * grid.R
    return np.sum(np.diff(grid.values[..., lo : hi + 1], axis=-1), axis=-1)


@dataclass(frozen=True)
class Coefficient:
    """A scalar function with its first two derivatives."""

    name: str
    f: Callable
    d1: Callable
    d2: Callable


def _nums(arg: str) -> list[float]:
    return [float(v) for v in arg.split(",")] if arg else []


def _zero(x):
    return np.zeros(np.shape(x))


def coefficient(spec: str) -> Coefficient:
    """Parse a diffusion coefficient from the catalog.

    ``const:c``          c
    ``linear:c0,c1``     c0 + c1 x
    ``tanh:c0,c1``       c0 + c1 tanh(x)
    ``sin:c0,c1``        c0 + c1 sin(x)
    """
    name, _, arg = spec.partition(":")
    p = _nums(arg)
    if name == "const":
        (c,) = p or [1.0]
        return Coefficient(spec, lambda x: np.full(np.shape(x), c), _zero, _zero)
    if name == "linear":
        c0, c1 = p
        return Coefficient(spec, lambda x: c0 + c1 * x, lambda x: np.full(np.shape(x), c1), _zero)
    if name == "tanh":
        c0, c1 = p

        def d1(x):
            return c1 / np.cosh(x) ** 2

        def d2(x):
            return -2 * c1 * np.tanh(x) / np.cosh(x) ** 2

        return Coefficient(spec, lambda x: c0 + c1 * np.tanh(x), d1, d2)
    if name == "sin":
        c0, c1 = p
        return Coefficient(
            spec, lambda x: c0 + c1 * np.sin(x), lambda x: c1 * np.cos(x), lambda x: -c1 * np.sin(x)
        )
    raise ValueError(f"unknown coefficient {spec!r}")


@dataclass
class DiffusionPath:
    grid: WienerGrid
    x_values: np.ndarray
    sigma: Coefficient
    drift: Coefficient
    x0: float

    @property
    def coarse_increments(self) -> np.ndarray:
        return np.diff(self.x_values[..., :: self.grid.R], axis=-1)


def euler_path(grid: WienerGrid, sigma: Coefficient | str, drift: Coefficient | str, x0: float = 0.0) -> DiffusionPath:
    """Euler scheme ``X_{i+1} = X_i + sigma(X_i) dW_i + b(X_i) h`` on the fine grid."""
    if isinstance(sigma, str):
        sigma = coefficient(sigma)
    if isinstance(drift, str):
        drift = coefficient(drift)
    dw = grid.fine_increments
    h = grid.fine_h
    x = np.empty_like(grid.values)
    x[..., 0] = x0
    cur = np.full(grid.values.shape[:-1], float(x0))
    for i in range(grid.N):
        cur = cur + sigma.f(cur) * dw[..., i] + drift.f(cur) * h
        x[..., i + 1] = cur
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("explosion: non-finite diffusion state")
    return DiffusionPath(grid, x, sigma, drift, float(x0))


@dataclass
class JumpOverlay:
    rate: float
    size_law: tuple[str, float]
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    sizes: np.ndarray = field(default_factory=lambda: np.empty(0))


def sample_jumps(rate: float, size_sd: float, seed: int, rep_index: int) -> JumpOverlay:
    """Compound Poisson jumps on [0, 1] with centred normal sizes."""
    if rate < 0 or size_sd < 0:
        raise ValueError("rate and size must be non-negative")
    g = rng.generator(seed, rep_index, "jumps")
    k = g.poisson(rate)
    times = np.sort(g.uniform(0.0, 1.0, k))
    sizes = g.normal(0.0, size_sd, k)
    return JumpOverlay(rate, ("normal", size_sd), times, sizes)


def jump_cells(overlay: JumpOverlay, n: int) -> np.ndarray:
    """Per-cell sums of jump sizes; a jump at time t lands in cell ceil(n t)."""
    out = np.zeros(n)
    cells = np.clip(np.ceil(overlay.times * n).astype(int), 1, n) - 1
    np.add.at(out, cells, overlay.sizes)
    return out


def contaminate(path: DiffusionPath, overlay) -> np.ndarray:
    """Observed coarse increments: latent increments plus jumps per cell.

    ``overlay`` is a single ``JumpOverlay`` or, for a batch, a sequence of
    them. The latent path is left untouched.
    """
    inc = path.coarse_increments.copy()
    n = path.grid.n
    if isinstance(overlay, JumpOverlay):
        if inc.ndim > 1:
            raise ValueError("batch path needs one overlay per replication")
        return inc + jump_cells(overlay, n)
    for b, ov in enumerate(overlay):
        inc[b] += jump_cells(ov, n)
    return inc
