"""Random symbols of the first-order expansion and their per-path coefficients.

A symbol is a polynomial ``sum c_{a,b} (iz)^a (ix)^b`` whose coefficients
are path functionals. Acting on a test function it becomes
``sum c_{a,b} d_z^a d_x^b f``.

Every double integral in the coefficients has the shape
``int int f(t) g(s) 1{t <= phi(s)} dt ds`` with ``phi(s) = 1 - s`` for
endpoint-anchored weights and ``phi(s) = s`` for predictable weights. The
default evaluation uses running integrals (exact for the piecewise-linear
interpolants, cost linear in the grid size); a tensor-product trapezoid on a
strided sub-grid is available as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import factorial

import numpy as np

from . import quad
from .chaos import coeff3
from .paths import WienerGrid
from .weights import LimitFields, WeightFamily, limit_fields

STATISTICS = ("variation", "section5")


@dataclass
class RandomSymbol:
    terms: dict = field(default_factory=dict)

    def coef(self, a: int, b: int = 0):
        return self.terms.get((a, b), 0.0)

    def __add__(self, other: "RandomSymbol") -> "RandomSymbol":
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out[k] + v if k in out else v
        return RandomSymbol(out)

    def add(self, a: int, b: int, value) -> None:
        self.terms[(a, b)] = self.terms.get((a, b), 0.0) + value

    def monomials(self) -> list:
        return sorted(self.terms)


def default_statistic(fam: WeightFamily) -> str:
    if fam.Q == (2,) and fam.kind in ("anticipative_endpoint", "constant"):
        return "section5"
    return "variation"


def _check_statistic(fam: WeightFamily, statistic: str | None) -> str:
    statistic = statistic or default_statistic(fam)
    if statistic not in STATISTICS:
        raise ValueError(f"unknown statistic {statistic!r}")
    if statistic == "section5" and default_statistic(fam) != "section5":
        raise ValueError("the endpoint statistic needs an endpoint-anchored or constant family with Q={2}")
    return statistic


def _inner_t(f: np.ndarray, kind: str, h: float) -> np.ndarray:
    """``int_0^{phi(s)} f(t) dt`` at every node ``s``."""
    c = quad.cumtrapz(f, h)
    return c[..., ::-1] if kind == "reverse" else c


def indicator_double(f, g, kind: str | None, h: float, method: str = "separable", stride: int = 1):
    """``int_0^1 int_0^1 f(t) g(s) 1{t <= phi(s)} dt ds``."""
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if kind is None:
        return np.zeros(np.broadcast_shapes(f.shape, g.shape)[:-1])
    if method == "separable":
        return quad.trapz(g * _inner_t(f, kind, h), h)
    if method != "tensor":
        raise ValueError(f"unknown method {method!r}")
    N = f.shape[-1] - 1
    if N % stride:
        raise ValueError("stride must divide the number of cells")
    fs, gs = f[..., ::stride], g[..., ::stride]
    K = fs.shape[-1]
    H = h * stride
    w = np.full(K, H)
    w[0] = w[-1] = H / 2
    t = np.linspace(0, 1, K)
    phi = 1 - t if kind == "reverse" else t
    mask = (t[:, None] <= phi[None, :] + 1e-12).astype(float)
    return np.einsum("...k,kl,...l->...", fs * w, mask, gs * w)


def _fields(fam: WeightFamily, grid_or_fields) -> LimitFields:
    if isinstance(grid_or_fields, LimitFields):
        return grid_or_fields
    return limit_fields(fam, grid_or_fields)


def a30_field(lf: LimitFields, q1: int):
    """Separable factors of ``a^{(3,0)}(t, s, q1, q1)``.

    Returns pairs ``(f_t, g_s)`` whose indicator double integrals sum to
    ``int int a^{(3,0)}``: the three products ``aring a a2 + adot adot a2 +
    adot a adot2``.
    """
    a2 = lf.a[2]
    return [
        (a2, lf.aring_s[q1] * lf.a[q1] + lf.adot_s[q1] ** 2),
        (lf.adot2, lf.adot_s[q1] * lf.a[q1]),
    ]


def symbol_s30(fam: WeightFamily, grid, method: str = "separable", stride: int = 1) -> RandomSymbol:
    lf = _fields(fam, grid)
    h = lf.h
    sym = RandomSymbol()
    Q = fam.Q
    c3 = 0.0
    for q1 in Q:
        for q2 in Q:
            for q3 in Q:
                qbar = q1 + q2 + q3
                if qbar % 2:
                    continue
                c = coeff3(q1 - 2, q2 - 1, q3 - 1, qbar // 2 - 2)
                if c:
                    c3 = c3 + (q1 + q2) * (q1 - 1) * c * quad.trapz(lf.a[q1] * lf.a[q2] * lf.a[q3], h) / 3
    if 2 in Q:
        c5 = 0.0
        c31 = 0.0
        for q1 in Q:
            k = factorial(q1)
            for ft, gs in a30_field(lf, q1):
                c3 = c3 + k * indicator_double(ft, gs, lf.kind, h, method, stride)
            g = lf.adot_s[q1] * lf.a[q1]
            c5 = c5 + k * indicator_double(0.5 * lf.DtG * lf.a[2], g, lf.kind, h, method, stride)
            c31 = c31 + k * indicator_double(lf.DtX * lf.a[2], g, lf.kind, h, method, stride)
        sym.add(5, 0, np.asarray(c5))
        sym.add(3, 1, np.asarray(c31))
    sym.add(3, 0, np.asarray(c3))
    return sym


def symbol_s11(fam: WeightFamily, grid) -> RandomSymbol:
    lf = _fields(fam, grid)
    if 2 not in fam.Q:
        return RandomSymbol()
    h = lf.h
    a2 = lf.a[2]
    sym = RandomSymbol()
    sym.add(1, 1, quad.trapz(lf.Xddot * a2, h) + quad.trapz(lf.DtX * lf.adot2, h))
    sym.add(3, 1, 0.5 * quad.trapz(lf.DtG * lf.DtX * a2, h))
    sym.add(1, 2, quad.trapz(lf.DtX**2 * a2, h))
    return sym


def _forward_field(fam: WeightFamily, grid: WienerGrid, deriv: int) -> np.ndarray:
    fn = fam.func(2)
    return (fn.f, fn.d1, fn.d2)[deriv](grid.values)


def symbol_s10(fam: WeightFamily, grid, statistic: str | None = None, fields: LimitFields | None = None) -> RandomSymbol:
    """General three-term symbol plus, for the endpoint statistic, the
    contribution of the Riemann-sum gap of the centring integral.
    """
    statistic = _check_statistic(fam, statistic)
    lf = fields if fields is not None else _fields(fam, grid)
    sym = RandomSymbol()
    if 2 not in fam.Q:
        return sym
    h = lf.h
    c3 = 0.5 * quad.trapz(lf.DtG * lf.adot2, h)
    c11 = quad.trapz(lf.DtX * lf.adot2, h)
    c1 = quad.trapz(lf.addot2, h)
    if statistic == "section5" and fam.kind == "anticipative_endpoint":
        if isinstance(grid, LimitFields):
            raise ValueError("the endpoint statistic needs the path, not only its fields")
        a1 = _forward_field(fam, grid, 1)
        a2 = _forward_field(fam, grid, 2)
        c3 = c3 - 0.25 * quad.trapz(lf.DtG * a1, h)
        c11 = c11 - 0.5 * quad.trapz(a1, h)
        c1 = c1 - 0.25 * quad.trapz(a2, h)
    sym.add(3, 0, np.asarray(c3))
    sym.add(1, 1, np.asarray(c11))
    sym.add(1, 0, np.asarray(c1))
    return sym


def full_symbol(fam: WeightFamily, grid: WienerGrid, statistic: str | None = None, method: str = "separable", stride: int = 1) -> RandomSymbol:
    statistic = _check_statistic(fam, statistic)
    lf = limit_fields(fam, grid)
    return symbol_s30(fam, lf, method, stride) + symbol_s11(fam, lf) + symbol_s10(fam, grid, statistic, lf)


# Monomial coverage: (a, b) -> the pieces of the displays producing it.
COVERAGE = {
    (3, 0): "triple product of a(t,q); double integral of a^(3,0); half D_tG against adot(t,2); endpoint gap term in D_tG a'",
    (5, 0): "half D_tG times int adot a ds times a(t,2)",
    (3, 1): "D_tX times int adot a ds times a(t,2); half D_tG D_tX a(t,2)",
    (1, 1): "Xddot a(t,2); D_tX adot(t,2) (appears in two symbols); endpoint gap term in a'",
    (1, 2): "(D_tX)^2 a(t,2)",
    (1, 0): "addot(t,2); endpoint gap term in a''",
}
