"""Realized volatility with a global jump filter.

Observed increments ``dX_j`` on ``n`` cells give the realized volatility
``U_n = sum dX_j^2`` and the local statistics
``L_{n,j} = eta_{n,j}^{-1} sum_{k in K_j} dX_k^2`` over the moving window
``K_j = [(j - m + 1) v 1, (j + m - 1) ^ n]``, ``m = floor(n lambda)``,
``eta_{n,j} = #K_j / n``. The filtered estimator is
``V_n = sum Phi(U_n, L_{n,j}) dX_j^2``; its target in simulation is
``Vbar_n = sum_j Phi(U_n, L_{n,j}) int_{I_j} sigma^2(X_t) dt``.

The limit objects use the latent fine path: ``U = int beta``,
``L_t = eta_t^{-1} int_{(t-lambda) v 0}^{(t+lambda) ^ 1} beta`` and
``a_t = Phi(U, L_t) beta_t`` with ``beta = sigma^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import quad
from .chaos import hermite
from .paths import Coefficient, DiffusionPath, WienerGrid, coefficient, euler_path
from .symbols import RandomSymbol

# --------------------------------------------------------------------------
# filters


def _bump(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _bump_d(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
    return out


def smooth_step(u):
    """C-infinity step: 0 for ``u <= 0``, 1 for ``u >= 1``."""
    a, b = _bump(u), _bump(1 - np.asarray(u, dtype=float))
    return a / (a + b)


def smooth_step_d(u):
    u = np.asarray(u, dtype=float)
    a, b = _bump(u), _bump(1 - u)
    da, db = _bump_d(u), _bump_d(1 - u)
    return (da * b + a * db) / (a + b) ** 2


@dataclass(frozen=True)
class FilterSpec:
    """``Phi(x, y)`` with partials ``d1 = dPhi/dx`` and ``d2 = dPhi/dy``."""

    name: str
    phi: Callable
    d1: Callable
    d2: Callable
    lam: float
    smooth: bool = True


def _zeros(x, y):
    return np.zeros(np.broadcast_shapes(np.shape(x), np.shape(y)))


def _check_partials(f: FilterSpec, tol: float = 1e-6):
    rng = np.random.default_rng(7)
    x = rng.uniform(0.3, 3.0, 10)
    y = rng.uniform(0.0, 6.0, 10)
    e = 1e-6
    fx = (f.phi(x + e, y) - f.phi(x - e, y)) / (2 * e)
    fy = (f.phi(x, y + e) - f.phi(x, y - e)) / (2 * e)
    if not (np.allclose(fx, f.d1(x, y), atol=tol * 10, rtol=tol * 100) and np.allclose(fy, f.d2(x, y), atol=tol * 10, rtol=tol * 100)):
        raise ValueError(f"partials of filter {f.name!r} are inconsistent")


def filter_spec(spec: str, lam: float = 0.05) -> FilterSpec:
    """Filter catalog.

    ``one``                   Phi = 1 (plain realized volatility)
    ``const:c``               Phi = c
    ``ux``                    Phi(x, y) = x
    ``linear:c0,c1,c2``       Phi(x, y) = c0 + c1 x + c2 y
    ``smoothcut:C[,c0]``      Phi(x, y) = psi(1/x) phi(y/x); phi = 1 on [0, C],
                              0 beyond 2C; psi = 1 on [0, 1/c0], 0 beyond 2/c0
    ``hardcut:C``             Phi(x, y) = 1{y <= C x}; not smooth, partials set to 0
    """
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    name, _, arg = spec.partition(":")
    if name == "one":
        f = FilterSpec(spec, lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y))), _zeros, _zeros, lam)
    elif name == "const":
        c = float(arg) if arg else 1.0
        f = FilterSpec(spec, lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), c), _zeros, _zeros, lam)
    elif name == "ux":
        f = FilterSpec(
            spec,
            lambda x, y: np.asarray(x, dtype=float) + 0 * np.asarray(y),
            lambda x, y: np.ones(np.broadcast_shapes(np.shape(x), np.shape(y))),
            _zeros,
            lam,
        )
    elif name == "linear":
        c0, c1, c2 = [float(v) for v in arg.split(",")]
        f = FilterSpec(
            spec,
            lambda x, y: c0 + c1 * np.asarray(x, dtype=float) + c2 * np.asarray(y, dtype=float),
            lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), c1),
            lambda x, y: np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), c2),
            lam,
        )
    elif name == "smoothcut":
        parts = [float(v) for v in arg.split(",")] if arg else [3.0]
        C = parts[0]
        c0 = parts[1] if len(parts) > 1 else 0.25
        if C <= 0 or c0 <= 0:
            raise ValueError("smoothcut needs positive C and c0")

        def cut(r):
            return 1 - smooth_step(np.asarray(r) / C - 1)

        def cut_d(r):
            return -smooth_step_d(np.asarray(r) / C - 1) / C

        def guard(v):
            return 1 - smooth_step(c0 * np.asarray(v) - 1)

        def guard_d(v):
            return -c0 * smooth_step_d(c0 * np.asarray(v) - 1)

        def phi(x, y):
            x = np.asarray(x, dtype=float)
            return guard(1 / x) * cut(y / x)

        def d1(x, y):
            x = np.asarray(x, dtype=float)
            y = np.asarray(y, dtype=float)
            return -guard_d(1 / x) / x**2 * cut(y / x) - guard(1 / x) * cut_d(y / x) * y / x**2

        def d2(x, y):
            x = np.asarray(x, dtype=float)
            return guard(1 / x) * cut_d(np.asarray(y) / x) / x

        f = FilterSpec(spec, phi, d1, d2, lam)
    elif name == "hardcut":
        C = float(arg) if arg else 3.0
        f = FilterSpec(spec, lambda x, y: (np.asarray(y) <= C * np.asarray(x)).astype(float), _zeros, _zeros, lam, smooth=False)
        return f
    else:
        raise ValueError(f"unknown filter {spec!r}; catalog: one, const:c, ux, linear:c0,c1,c2, smoothcut:C[,c0], hardcut:C")
    _check_partials(f)
    return f


# --------------------------------------------------------------------------
# windows and local statistics


def windows(n: int, lam: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """1-based window bounds ``(lo, hi)`` and ``eta = #K_j / n`` for ``j = 1..n``."""
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    m = math.floor(n * lam)
    if m < 2:
        raise ValueError("n * lambda must be at least 2")
    j = np.arange(1, n + 1)
    lo = np.maximum(j - m + 1, 1)
    hi = np.minimum(j + m - 1, n)
    return lo, hi, (hi - lo + 1) / n


def window_sums(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """``sum_{k=lo_j}^{hi_j} values_k`` along the last axis (1-based bounds)."""
    c = np.zeros(values.shape[:-1] + (values.shape[-1] + 1,))
    np.cumsum(values, axis=-1, out=c[..., 1:])
    return c[..., hi] - c[..., lo - 1]


def local_stats(increments: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """``(U_n, L)`` from observed coarse increments (last axis = cells)."""
    d2 = np.asarray(increments, dtype=float) ** 2
    n = d2.shape[-1]
    lo, hi, eta = windows(n, lam)
    return d2.sum(axis=-1), window_sums(d2, lo, hi) / eta


# --------------------------------------------------------------------------
# latent limit objects


@dataclass
class LatentFields:
    beta: np.ndarray  # sigma^2 on the fine grid
    U: np.ndarray  # int beta
    L: np.ndarray  # L_t at fine nodes
    eta: np.ndarray  # eta_t at fine nodes
    a: np.ndarray  # Phi(U, L_t) beta_t
    G: np.ndarray  # int 2 a^2


def _window_edges(t, lam):
    t = np.asarray(t, dtype=float)
    lo = np.maximum(t - lam, 0.0)
    hi = np.minimum(t + lam, 1.0)
    return lo, hi, hi - lo


def latent_L(beta: np.ndarray, h: float, t, lam: float) -> np.ndarray:
    lo, hi, eta = _window_edges(t, lam)
    return (quad.integral_to(beta, h, hi) - quad.integral_to(beta, h, lo)) / eta


def latent_fields(path: DiffusionPath, filt: FilterSpec) -> LatentFields:
    g = path.grid
    h = g.fine_h
    beta = path.sigma.f(path.x_values) ** 2
    U = quad.trapz(beta, h)
    L = latent_L(beta, h, g.times, filt.lam)
    _, _, eta = _window_edges(g.times, filt.lam)
    a = filt.phi(U[..., None] if np.ndim(U) else U, L) * beta
    G = quad.trapz(2 * a * a, h)
    return LatentFields(beta, U, L, eta, a, G)


# --------------------------------------------------------------------------
# estimator


@dataclass
class RVSample:
    u_n: np.ndarray
    l: np.ndarray
    v_robust: np.ndarray
    v_target: np.ndarray
    z_n: np.ndarray
    g_inf: np.ndarray
    iv: np.ndarray  # clean integrated volatility int sigma^2
    n: int


def robust_rv(path: DiffusionPath, filt: FilterSpec, increments: np.ndarray | None = None) -> RVSample:
    """Filtered realized volatility, its target and the scaled error.

    ``increments`` are the observed (possibly contaminated) coarse
    increments; by default the latent ones.
    """
    g = path.grid
    n = g.n
    d = path.coarse_increments if increments is None else np.asarray(increments, dtype=float)
    u, L = local_stats(d, filt.lam)
    w = filt.phi(u[..., None] if np.ndim(u) else u, L)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError("filter returned non-finite values")
    beta = path.sigma.f(path.x_values) ** 2
    cells = quad.cell_integrals(beta, g.R, g.fine_h)
    v = np.sum(w * d * d, axis=-1)
    vbar = np.sum(w * cells, axis=-1)
    lat = latent_fields(path, filt)
    return RVSample(u, L, v, vbar, math.sqrt(n) * (v - vbar), lat.G, cells.sum(axis=-1), n)


# --------------------------------------------------------------------------
# error decomposition


def _ito_coefficients(sigma: Coefficient, drift: Coefficient, x):
    s, s1, s2 = sigma.f(x), sigma.d1(x), sigma.d2(x)
    b, b1 = drift.f(x), drift.d1(x)
    b11 = s * s1
    b12 = 0.5 * s * s * s2 + b * s1
    b21 = s * b1
    beta1 = 2 * s * s * s1
    beta2 = b11**2 + 2 * s * b12
    return dict(s=s, b=b, b11=b11, b12=b12, b21=b21, beta1=beta1, beta2=beta2)


def tangent(path: DiffusionPath) -> tuple[np.ndarray, np.ndarray]:
    """First variation ``Y`` of the Euler scheme and ``rho_m = sigma(X_m) h / Y_{m+1}``.

    ``dX_k / dW_m = sigma(X_m) Y_k / Y_{m+1}`` for ``k > m``.
    """
    g = path.grid
    x = path.x_values
    dw = g.fine_increments
    h = g.fine_h
    J = 1 + path.sigma.d1(x[..., :-1]) * dw + path.drift.d1(x[..., :-1]) * h
    Y = np.ones_like(x)
    np.cumprod(J, axis=-1, out=Y[..., 1:])
    rho = path.sigma.f(x[..., :-1]) * h / Y[..., 1:]
    return Y, rho


def theta_beta_derivative(path: DiffusionPath, filt: FilterSpec) -> np.ndarray:
    """``D_{1_j}(Theta_j beta_{t_{j-1}})`` for every cell, from the tangent process."""
    g = path.grid
    n, R, h = g.n, g.R, g.fine_h
    x = path.x_values
    lat = latent_fields(path, filt)
    Y, rho = tangent(path)
    Rho = np.zeros_like(x)
    np.cumsum(rho, axis=-1, out=Rho[..., 1:])
    H = 2 * path.sigma.f(x) * path.sigma.d1(x) * Y  # beta'(X) Y
    CH = quad.cumtrapz(H, h)
    CHR = quad.cumtrapz(H * Rho, h)
    s_idx = np.arange(n) * R
    e_idx = s_idx + R
    t0 = s_idx / g.N
    Rs = Rho[..., s_idx]
    P = Rho[..., e_idx] - Rs
    inside = (CHR[..., e_idx] - CHR[..., s_idx]) - Rs * (CH[..., e_idx] - CH[..., s_idx])

    def d_integral_to(E):
        # D_{1_j} int_0^E beta for E >= t_j
        return inside + P * (quad.integral_to(H, h, E) - CH[..., e_idx])

    dU = d_integral_to(np.ones(n))
    _, hi, eta = _window_edges(t0, filt.lam)
    dL = d_integral_to(hi) / eta
    U = lat.U[..., None] if np.ndim(lat.U) else lat.U
    L0 = lat.L[..., s_idx]
    beta0 = lat.beta[..., s_idx]
    return beta0 * (filt.d1(U, L0) * dU + filt.d2(U, L0) * dL)


def bump_theta_beta_derivative(path: DiffusionPath, filt: FilterSpec, j: int, eps: float = 1e-4) -> np.ndarray:
    """Path-bump oracle for ``D_{1_j}(Theta_j beta_{t_{j-1}})``.

    Shifts the driving path by ``eps * int_0^t 1_j`` and differences the
    recomputed functional; bias ``O(eps^2)``.
    """
    g = path.grid
    lo = (j - 1) * g.R
    shift = np.clip(g.times - lo * g.fine_h, 0.0, g.R * g.fine_h)

    def value(s):
        gg = WienerGrid(g.n, g.R, g.values + s * shift, g.seed, g.rep_index)
        p = euler_path(gg, path.sigma, path.drift, path.x0)
        lat = latent_fields(p, filt)
        U = lat.U
        L0 = lat.L[..., lo]
        return filt.phi(U, L0) * lat.beta[..., lo]

    return (value(eps) - value(-eps)) / (2 * eps)


@dataclass
class ErrorTerms:
    z_n: np.ndarray
    m_n: np.ndarray
    n_o: np.ndarray
    n_x: np.ndarray
    d_term: np.ndarray  # n sum D_{1_j}(Theta_j beta) I_1(1_j)
    s_term: np.ndarray  # n sum Theta_j S_j
    residual: np.ndarray
    n: int
    extras: dict = field(default_factory=dict)


def error_expansion_terms(path: DiffusionPath, filt: FilterSpec, method: str = "tangent", eps: float = 1e-4) -> ErrorTerms:
    """Split of ``Z_n`` into ``M_n + n^{-1/2}(N^o + N^x)`` plus a residual.

    ``method="bump"`` takes the derivative pieces from the path-bump oracle
    (one extra pair of Euler runs per cell).
    """
    if not filt.smooth:
        raise ValueError("the expansion needs a smooth filter")
    if method not in ("tangent", "bump"):
        raise ValueError("method must be 'tangent' or 'bump'")
    g = path.grid
    n, R = g.n, g.R
    hc = 1.0 / n
    rv = robust_rv(path, filt)
    lat = latent_fields(path, filt)
    s_idx = np.arange(n) * R
    x0 = path.x_values[..., s_idx]
    c = _ito_coefficients(path.sigma, path.drift, x0)
    beta0 = c["s"] ** 2
    dW = g.coarse_increments
    I1 = dW
    I2 = dW * dW - hc
    I3 = hc**1.5 * hermite(3, dW / math.sqrt(hc))
    # int_{I_j} (t_j - s) dW_s = int_{I_j} (W_s - W_{t_{j-1}}) ds
    Wint = quad.cell_integrals(g.values, R, g.fine_h) - hc * g.values[..., s_idx]
    S = (
        c["s"] * c["b11"] * (I3 + 2 * hc * I1)
        + 2 * hc * c["s"] * c["b"] * I1
        + hc**2 * c["s"] * (c["b12"] + c["b21"])
        + hc**2 * c["b"] ** 2
        + 0.5 * hc**2 * c["b11"] ** 2
        - c["beta1"] * Wint
        - 0.5 * hc**2 * c["beta2"]
    )
    F = beta0 * I2
    U = lat.U[..., None] if np.ndim(lat.U) else lat.U
    L0 = lat.L[..., s_idx]
    theta = filt.phi(U, L0)
    if method == "tangent":
        D = theta_beta_derivative(path, filt)
    else:
        D = np.stack([bump_theta_beta_derivative(path, filt, j, eps) for j in range(1, n + 1)], axis=-1)
    lo, hi, eta = windows(n, filt.lam)
    sumF = F.sum(axis=-1, keepdims=True)
    n_x = n * np.sum(F * (filt.d1(U, L0) * sumF + filt.d2(U, L0) / eta * window_sums(F, lo, hi)), axis=-1)
    d_term = n * np.sum(D * I1, axis=-1)
    s_term = n * np.sum(theta * S, axis=-1)
    m_n = math.sqrt(n) * np.sum(theta * F, axis=-1) - math.sqrt(n) * np.sum(D * I1, axis=-1)
    n_o = d_term + s_term
    resid = rv.z_n - m_n - (n_o + n_x) / math.sqrt(n)
    return ErrorTerms(rv.z_n, m_n, n_o, n_x, d_term, s_term, resid, n, {"theta": theta, "F": F, "S": S, "D": D})


# --------------------------------------------------------------------------
# symbols


def _lambda_weights(lat: LatentFields, filt: FilterSpec, h: float, times: np.ndarray, kernel: np.ndarray):
    """``int int a_t a_s Lambda_{s,t}`` pieces with ``k = kernel`` standing for ``a``.

    ``Lambda_{s,t} = beta_s beta_t (d1Phi_s + 1{t in window(s)} eta_s^{-1} d2Phi_s)``.
    Returns ``(int d1Phi beta k * int beta k, int eta^{-1} d2Phi beta k (int_window beta k))``.
    """
    U = lat.U[..., None] if np.ndim(lat.U) else lat.U
    p1 = filt.d1(U, lat.L)
    p2 = filt.d2(U, lat.L)
    bk = lat.beta * kernel
    first = quad.trapz(p1 * bk, h) * quad.trapz(bk, h)
    lo, hi, eta = _window_edges(times, filt.lam)
    win = quad.integral_to(bk, h, hi) - quad.integral_to(bk, h, lo)
    second = quad.trapz(p2 / eta * bk * win, h)
    return first, second, p1, p2


def adjustment_symbol(path: DiffusionPath, filt: FilterSpec, stride: int = 1, g_floor: float = 1e-12) -> RandomSymbol:
    """Perturbation adjustment ``c3 G^2 (iz)^3 + c1 (iz)`` from the cross term ``N^x``.

    ``c1 = int 2 Lambda_{s,s} ds`` and
    ``c3 = 8 G^{-2} int_0^1 int_0^t a_t Lambda~_{s,t} a_s ds dt``, which by
    symmetry is ``4 G^{-2}`` times the full-square integral.
    """
    g = path.grid
    if g.N % stride:
        raise ValueError("stride must divide the number of fine cells")
    x = path.x_values[..., ::stride]
    h = g.fine_h * stride
    times = np.linspace(0, 1, x.shape[-1])
    beta = path.sigma.f(x) ** 2
    U = quad.trapz(beta, h)
    L = latent_L(beta, h, times, filt.lam)
    _, _, eta = _window_edges(times, filt.lam)
    Ub = U[..., None] if np.ndim(U) else U
    a = filt.phi(Ub, L) * beta
    G = quad.trapz(2 * a * a, h)
    if np.any(G <= g_floor):
        raise FloatingPointError("degenerate variance")
    lat = LatentFields(beta, U, L, eta, a, G)
    first, second, p1, p2 = _lambda_weights(lat, filt, h, times, a)
    c3 = 4 * (first + second) / G**2
    c1 = quad.trapz(2 * beta * beta * (p1 + p2 / eta), h)
    sym = RandomSymbol()
    sym.add(3, 0, np.asarray(c3 * G**2))
    sym.add(1, 0, np.asarray(c1))
    return sym


RV_SYMBOL_OMITTED = (
    "(3,0): double integral of a^(3,0) built from Malliavin derivatives of a_t",
    "(5,0), (3,1): D_tG and D_tX_1 weighted integrals of adot",
    "(1,1): Xddot and D_tX adot(t,2) terms",
    "(3,1): half D_tG D_tX a",
    "S^(1,0): all three terms",
)


def rv_symbol(path: DiffusionPath, filt: FilterSpec, stride: int = 1) -> tuple[RandomSymbol, tuple]:
    """Partial full symbol ``S + G`` for the filtered estimator.

    Includes the triple-product part of ``S^(3,0)`` (``(4/3) int a^3``), the
    ``(iz)(ix)^2`` term ``int (D_t X_1)^2 a_t dt`` and the adjustment symbol.
    Terms that need Malliavin derivatives of ``a_t`` are not evaluated; their
    names are returned as the second element.
    """
    g = path.grid
    h = g.fine_h
    lat = latent_fields(path, filt)
    Y, _ = tangent(path)
    dtx = path.sigma.f(path.x_values) * Y[..., -1:] / Y
    sym = RandomSymbol()
    sym.add(3, 0, np.asarray(4.0 / 3.0 * quad.trapz(lat.a**3, h)))
    sym.add(1, 2, np.asarray(quad.trapz(dtx**2 * lat.a, h)))
    return sym + adjustment_symbol(path, filt, stride), RV_SYMBOL_OMITTED


# --------------------------------------------------------------------------
# simulation helpers


def simulate_paths(n: int, R: int, seed: int, reps, sigma="tanh:1,0.1", drift="const:0", x0: float = 0.0, purpose: str = "vol") -> DiffusionPath:
    from .paths import sample_wiener

    g = sample_wiener(n, R, seed, reps, purpose)
    return euler_path(g, coefficient(sigma) if isinstance(sigma, str) else sigma, coefficient(drift) if isinstance(drift, str) else drift, x0)


def robust_study(
    n: int,
    reps: int,
    seed: int,
    filt: FilterSpec,
    sigma="tanh:1,0.1",
    drift="const:0",
    R: int = 4,
    x0: float = 0.0,
    jump_rate: float = 0.0,
    jump_size: float = 10.0,
    workers: int | None = None,
) -> dict:
    """Replicated filtered estimator on clean and contaminated increments.

    Jumps are compound Poisson with rate ``jump_rate`` and sizes
    ``N(0, jump_size / n)``. Per replication the result holds the
    contaminated ``u_n, v_robust, v_target, z_n``, the clean ``u_clean,
    v_clean``, the integrated volatility ``iv`` and ``g_inf``.
    """
    from .parallel import map_blocks
    from .paths import contaminate, sample_jumps

    if reps < 1:
        raise ValueError("reps must be positive")
    sig = coefficient(sigma) if isinstance(sigma, str) else sigma
    drf = coefficient(drift) if isinstance(drift, str) else drift
    windows(n, filt.lam)
    size_sd = math.sqrt(jump_size / n)

    def block(idx):
        p = simulate_paths(n, R, seed, idx, sig, drf, x0)
        clean = robust_rv(p, filt)
        if jump_rate > 0:
            obs = contaminate(p, [sample_jumps(jump_rate, size_sd, seed, int(i)) for i in idx])
            dirty = robust_rv(p, filt, obs)
        else:
            dirty = clean
        return {
            "u_n": dirty.u_n,
            "v_robust": dirty.v_robust,
            "v_target": dirty.v_target,
            "z_n": dirty.z_n,
            "g_inf": dirty.g_inf,
            "u_clean": clean.u_n,
            "v_clean": clean.v_robust,
            "iv": clean.iv,
        }

    return map_blocks(block, reps, workers=workers)
