"""First-order expansions of ``E[f(Z_n, X)]``, of the density and of the CDF of ``Z_n``.

The approximation side only needs the limit objects of a path: the random
variance ``G``, the reference variable ``X = w_1`` and the symbol
coefficients. They are sampled once on a fine grid (``M`` cells) and reused
for every ``n`` and every test function. The Gaussian factor ``zeta`` is
integrated out per path by Gauss-Hermite quadrature, which is exact for
polynomial ``f`` and removes the ``zeta`` sampling noise otherwise; the
Monte Carlo alternative draws ``zeta`` from its own stream.

The target ``E[f(Z_n, X)]`` is estimated on an independent stream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import ndtr

from . import rng
from .chaos import hermite
from .estimators import section5_z, variation
from .parallel import map_blocks
from .paths import sample_wiener
from .symbols import _check_statistic, full_symbol
from .weights import WeightFamily, g_infinity

GH_NODES = 48
LIMIT_M = 1024
TARGET_R = 2


def _normal_pdf(z, var):
    return np.exp(-0.5 * z * z / var) / np.sqrt(2 * np.pi * var)


@dataclass
class TestFunction:
    """A test function ``f(z, x)`` with partial derivatives ``d_z^a d_x^b f``.

    ``gauss`` optionally gives ``E[d_z^a d_x^b f(sqrt(G) zeta, X)]`` in
    closed form for arrays ``G``, ``X``; it is required when ``f`` has no
    pointwise derivatives (indicators).
    """

    __test__ = False

    name: str
    f: Callable
    derivs: dict = field(default_factory=dict)
    gauss: Callable | None = None

    def deriv(self, a: int, b: int) -> Callable:
        if (a, b) == (0, 0):
            return self.f
        if (a, b) in self.derivs:
            return self.derivs[(a, b)]
        return lambda z, x: fd_derivative(self.f, a, b, z, x)


def fd_derivative(f: Callable, a: int, b: int, z, x):
    """Nested central differences; step ``eps^(1/(order+2))`` scaled by ``|z|+1``."""
    order = a + b
    if order == 0:
        return f(z, x)
    step = np.finfo(float).eps ** (1.0 / (order + 2))
    z = np.asarray(z, dtype=float)
    x = np.asarray(x, dtype=float)
    hz = step * (np.abs(z) + 1)
    hx = step * (np.abs(x) + 1)

    def dz(g, k):
        if k == 0:
            return g
        inner = dz(g, k - 1)
        return lambda zz, xx: (inner(zz + hz, xx) - inner(zz - hz, xx)) / (2 * hz)

    def dx(g, k):
        if k == 0:
            return g
        inner = dx(g, k - 1)
        return lambda zz, xx: (inner(zz, xx + hx) - inner(zz, xx - hx)) / (2 * hx)

    return dz(dx(f, b), a)(z, x)


def _zero(z, x):
    return np.zeros(np.broadcast_shapes(np.shape(z), np.shape(x)))


def _const(c):
    return lambda z, x: np.full(np.broadcast_shapes(np.shape(z), np.shape(x)), float(c))


def _polynomial_in_z(coefs) -> dict:
    """Derivative table for ``f(z) = sum c_k z^k``."""
    p = np.polynomial.Polynomial(coefs)
    out = {}
    for a in range(1, 6):
        d = p.deriv(a)
        out[(a, 0)] = (lambda d: lambda z, x: d(np.asarray(z, dtype=float)) + 0 * np.asarray(x))(d)
        for b in (1, 2):
            out[(a, b)] = _zero
    for b in (1, 2):
        out[(0, b)] = _zero
    return out


def _cdf_gauss(c: float):
    def gauss(a, b, G, X):
        G = np.asarray(G, dtype=float)
        if b:
            return np.zeros(np.broadcast_shapes(G.shape, np.shape(X)))
        s = np.sqrt(G)
        u = c / s
        if a == 0:
            return ndtr(u) + 0 * np.asarray(X)
        return -(G ** (-(a - 1) / 2)) * hermite(a - 1, u) * _normal_pdf(c, G) + 0 * np.asarray(X)

    return gauss


def cdf_function(c: float) -> TestFunction:
    """Indicator ``1{z <= c}``, handled through its Gaussian expectations only."""
    c = float(c)
    return TestFunction(f"cdf:{c:.17g}", lambda z, x: (np.asarray(z) <= c).astype(float) + 0 * np.asarray(x), {}, _cdf_gauss(c))


def test_function(spec: str) -> TestFunction:
    """Catalog: ``z``, ``z2``, ``z3``, ``sinz``, ``zx``, ``cdf[:c]``."""
    name, _, arg = spec.partition(":")
    if name in ("z", "z2", "z3"):
        k = {"z": 1, "z2": 2, "z3": 3}[name]
        coefs = [0.0] * k + [1.0]
        p = np.polynomial.Polynomial(coefs)
        return TestFunction(spec, lambda z, x: p(np.asarray(z, dtype=float)) + 0 * np.asarray(x), _polynomial_in_z(coefs))
    if name == "sinz":
        d = {}
        for a in range(1, 6):
            d[(a, 0)] = (lambda a: lambda z, x: np.sin(np.asarray(z) + a * np.pi / 2) + 0 * np.asarray(x))(a)
            for b in (1, 2):
                d[(a, b)] = _zero
        for b in (1, 2):
            d[(0, b)] = _zero
        return TestFunction(spec, lambda z, x: np.sin(z) + 0 * np.asarray(x), d)
    if name == "zx":
        d = {(1, 0): lambda z, x: np.asarray(x, dtype=float) + 0 * np.asarray(z), (0, 1): lambda z, x: np.asarray(z, dtype=float) + 0 * np.asarray(x), (1, 1): _const(1.0)}
        for a in range(0, 6):
            for b in range(0, 3):
                if (a, b) != (0, 0) and (a, b) not in d:
                    d[(a, b)] = _zero
        return TestFunction(spec, lambda z, x: np.asarray(z) * np.asarray(x), d)
    if name == "cdf":
        return cdf_function(float(arg) if arg else 0.0)
    raise ValueError(f"unknown test function {spec!r}; catalog: z, z2, z3, sinz, zx, cdf[:c]")


TEST_FUNCTIONS = ("z", "z2", "z3", "sinz", "zx", "cdf")


def gauss_mean(tf: TestFunction, a: int, b: int, G, X, nodes: int = GH_NODES) -> np.ndarray:
    """``E_zeta[d_z^a d_x^b f(sqrt(G) zeta, X)]`` per path."""
    if tf.gauss is not None:
        return np.asarray(tf.gauss(a, b, G, X), dtype=float)
    G = np.asarray(G, dtype=float)
    X = np.asarray(X, dtype=float)
    u, w = hermegauss(nodes)
    w = w / np.sqrt(2 * np.pi)
    z = np.sqrt(G)[..., None] * u
    vals = tf.deriv(a, b)(z, X[..., None])
    return np.asarray(vals, dtype=float) @ w


def _mean_se(v: np.ndarray) -> tuple[float, float]:
    """Mean by correctly rounded summation (order independent) and its SE."""
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0:
        return float("nan"), float("nan")
    m = math.fsum(v) / v.size
    if v.size < 2:
        return m, float("nan")
    var = math.fsum((v - m) ** 2) / (v.size - 1)
    return m, math.sqrt(var / v.size)


@dataclass
class LimitSample:
    """Per-path limit quantities: ``G``, ``X`` and symbol coefficients."""

    G: np.ndarray
    X: np.ndarray
    terms: dict
    M: int
    seed: int
    statistic: str
    zeta: np.ndarray | None = None

    @property
    def reps(self) -> int:
        return self.G.size


def limit_sample(
    fam: WeightFamily,
    reps: int,
    seed: int = 0,
    M: int = LIMIT_M,
    statistic: str | None = None,
    zeta: bool = False,
    workers: int | None = None,
) -> LimitSample:
    statistic = _check_statistic(fam, statistic)

    def block(idx):
        g = sample_wiener(M, 1, seed, idx, "limit")
        sym = full_symbol(fam, g, statistic)
        out = {"G": np.broadcast_to(np.asarray(g_infinity(fam, g), dtype=float), idx.shape).copy(), "X": g.values[:, -1].copy()}
        for (a, b), v in sym.terms.items():
            out[f"{a},{b}"] = np.broadcast_to(np.asarray(v, dtype=float), idx.shape).copy()
        if zeta:
            out["zeta"] = rng.normals(seed, idx, "zeta", 1)[:, 0]
        return out

    res = map_blocks(block, reps, workers=workers)
    G = res.pop("G")
    if np.any(G <= 0):
        raise FloatingPointError("degenerate variance")
    X = res.pop("X")
    z = res.pop("zeta", None)
    terms = {tuple(int(v) for v in k.split(",")): arr for k, arr in res.items()}
    return LimitSample(G, X, terms, M, seed, statistic, z)


@dataclass
class TargetSample:
    z: np.ndarray
    X: np.ndarray
    n: int
    R: int
    seed: int


def target_sample(
    fam: WeightFamily,
    n: int,
    reps: int,
    seed: int = 0,
    R: int = TARGET_R,
    statistic: str | None = None,
    workers: int | None = None,
) -> TargetSample:
    statistic = _check_statistic(fam, statistic)

    def block(idx):
        g = sample_wiener(n, R, seed, idx, "target")
        z = section5_z(fam, g) if statistic == "section5" else variation(fam, g).v_n
        return np.asarray(z, dtype=float), g.values[:, -1].copy()

    z, x = map_blocks(block, reps, workers=workers)
    return TargetSample(z, x, n, R, seed)


@dataclass
class ExpansionReport:
    f: str
    n: int
    reps: int
    target: float
    se_t: float
    zeroth: float
    se0: float
    first: float
    se1: float
    correction: float
    se_corr: float
    err0: float
    err1: float
    se_err0: float
    se_err1: float
    margin: float
    se_margin: float

    @property
    def scaled_err0(self) -> float:
        return math.sqrt(self.n) * self.err0

    @property
    def scaled_err1(self) -> float:
        return math.sqrt(self.n) * self.err1

    def improved(self, k: float = 3.0) -> bool:
        """``err1 < err0`` with ``k`` standard errors to spare."""
        return self.margin > k * self.se_margin

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "f": self.f,
            "target": self.target,
            "se_t": self.se_t,
            "zeroth": self.zeroth,
            "first": self.first,
            "err0": self.err0,
            "err1": self.err1,
            "se_err0": self.se_err0,
            "se_err1": self.se_err1,
            "sqrt_n_err0": self.scaled_err0,
            "sqrt_n_err1": self.scaled_err1,
            "correction": self.correction,
            "se_corr": self.se_corr,
            "margin": self.margin,
            "se_margin": self.se_margin,
        }


def approximation_terms(tf: TestFunction, lim: LimitSample) -> tuple[np.ndarray, np.ndarray]:
    """Per-path zeroth-order value and symbol correction (per unit ``n^{-1/2}``)."""
    if lim.zeta is not None:
        z = np.sqrt(lim.G) * lim.zeta
        zeroth = np.asarray(tf.f(z, lim.X), dtype=float)
        corr = np.zeros_like(zeroth)
        for (a, b), c in lim.terms.items():
            if tf.gauss is not None:
                raise ValueError("indicator test functions need the quadrature route")
            corr = corr + c * tf.deriv(a, b)(z, lim.X)
        return zeroth, corr
    zeroth = gauss_mean(tf, 0, 0, lim.G, lim.X)
    corr = np.zeros_like(zeroth)
    for (a, b), c in lim.terms.items():
        corr = corr + c * gauss_mean(tf, a, b, lim.G, lim.X)
    return zeroth, corr


def expansion_report(tf: TestFunction, lim: LimitSample, tgt: TargetSample) -> ExpansionReport:
    n = tgt.n
    fz = np.asarray(tf.f(tgt.z, tgt.X), dtype=float)
    t, se_t = _mean_se(fz)
    zeroth, corr = approximation_terms(tf, lim)
    first_i = zeroth + corr / math.sqrt(n)
    z0, se0 = _mean_se(zeroth)
    c, se_c = _mean_se(corr)
    f1, se1 = _mean_se(first_i)
    d0, d1 = t - z0, t - f1
    # |d1| < |d0| exactly when the target lies past the midpoint of the two
    # approximations, on the side the correction points to.
    sc = np.sign(c)
    mid_i = zeroth + 0.5 * corr / math.sqrt(n)
    mid, se_mid = _mean_se(mid_i)
    return ExpansionReport(
        f=tf.name,
        n=n,
        reps=fz.size,
        target=t,
        se_t=se_t,
        zeroth=z0,
        se0=se0,
        first=f1,
        se1=se1,
        correction=c,
        se_corr=se_c,
        err0=abs(d0),
        err1=abs(d1),
        se_err0=math.hypot(se_t, se0),
        se_err1=math.hypot(se_t, se1),
        margin=float(sc * (t - mid)),
        se_margin=math.hypot(se_t, se_mid),
    )


def _warn_reps(reps: int):
    if reps < 1000:
        warnings.warn(f"only {reps} replications; Monte Carlo error may dominate", stacklevel=3)


def expand_expectation(
    fam: WeightFamily,
    f,
    n: int,
    reps: int,
    seed: int = 0,
    M: int = LIMIT_M,
    R: int = TARGET_R,
    statistic: str | None = None,
    limit: LimitSample | None = None,
    workers: int | None = None,
) -> ExpansionReport:
    """Target, zeroth- and first-order estimates of ``E[f(Z_n, X)]``."""
    tf = test_function(f) if isinstance(f, str) else f
    _warn_reps(reps)
    lim = limit if limit is not None else limit_sample(fam, reps, seed, M, statistic, workers=workers)
    tgt = target_sample(fam, n, reps, seed, R, statistic, workers)
    return expansion_report(tf, lim, tgt)


def density_terms(lim: LimitSample, n: int, z_grid) -> tuple[np.ndarray, np.ndarray]:
    """Zeroth- and first-order marginal densities of ``Z_n`` on ``z_grid``."""
    z = np.asarray(z_grid, dtype=float)
    p0 = np.zeros(z.shape)
    p1 = np.zeros(z.shape)
    G = lim.G
    order = sorted(a for (a, b) in lim.terms if b == 0)
    for i, zi in enumerate(z):
        phi = _normal_pdf(zi, G)
        u = zi / np.sqrt(G)
        corr = np.zeros_like(G)
        for a in order:
            corr = corr + lim.terms[(a, 0)] * G ** (-a / 2) * hermite(a, u)
        p0[i] = math.fsum(phi) / G.size
        p1[i] = math.fsum(phi * (1 + corr / math.sqrt(n))) / G.size
    return p0, p1


def expansion_density(
    fam: WeightFamily,
    n: int,
    z_grid,
    reps: int,
    seed: int = 0,
    M: int = LIMIT_M,
    statistic: str | None = None,
    limit: LimitSample | None = None,
    workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """``(p0, p1)``: mixture-normal density and its first-order correction."""
    _warn_reps(reps)
    lim = limit if limit is not None else limit_sample(fam, reps, seed, M, statistic, workers=workers)
    return density_terms(lim, n, z_grid)


def cdf_terms(lim: LimitSample, n: int, z_grid) -> tuple[np.ndarray, np.ndarray]:
    """Zeroth- and first-order CDFs of ``Z_n`` on ``z_grid``."""
    z = np.asarray(z_grid, dtype=float)
    F0 = np.zeros(z.shape)
    F1 = np.zeros(z.shape)
    for i, c in enumerate(z):
        tf = cdf_function(c)
        zeroth, corr = approximation_terms(tf, lim)
        F0[i] = math.fsum(zeroth) / zeroth.size
        F1[i] = math.fsum(zeroth + corr / math.sqrt(n)) / zeroth.size
    return F0, F1


@dataclass
class CdfComparison:
    n: int
    z: np.ndarray
    empirical: np.ndarray
    F0: np.ndarray
    F1: np.ndarray

    @property
    def sup0(self) -> float:
        return float(np.max(np.abs(self.empirical - self.F0)))

    @property
    def sup1(self) -> float:
        return float(np.max(np.abs(self.empirical - self.F1)))


def compare_cdf(lim: LimitSample, tgt: TargetSample, z_grid) -> CdfComparison:
    z = np.asarray(z_grid, dtype=float)
    srt = np.sort(tgt.z)
    emp = np.searchsorted(srt, z, side="right") / srt.size
    F0, F1 = cdf_terms(lim, tgt.n, z)
    return CdfComparison(tgt.n, z, emp, F0, F1)


def compare_distributions(
    fam: WeightFamily,
    n_grid,
    reps: int,
    f_set=("z2", "z3", "sinz", "zx"),
    seed: int = 0,
    M: int = LIMIT_M,
    R: int = TARGET_R,
    statistic: str | None = None,
    z_grid=None,
    workers: int | None = None,
) -> dict:
    """Error table over ``n_grid``: expectation reports and, with ``z_grid``, CDF sup-errors."""
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3:
        raise ValueError("n_grid needs at least 3 values")
    if reps < 1:
        raise ValueError("reps must be positive")
    _warn_reps(reps)
    tfs = [test_function(f) if isinstance(f, str) else f for f in f_set]
    lim = limit_sample(fam, reps, seed, M, statistic, workers=workers)
    rows, cdfs = [], []
    for n in n_grid:
        tgt = target_sample(fam, n, reps, seed, R, statistic, workers)
        rows.extend(expansion_report(tf, lim, tgt) for tf in tfs)
        if z_grid is not None:
            cdfs.append(compare_cdf(lim, tgt, z_grid))
    return {"reports": rows, "cdf": cdfs, "limit": lim}
