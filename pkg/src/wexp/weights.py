"""Weight families ``a_j(q)`` and the limit fields they induce.

Three kinds of family are supported:

* ``anticipative_endpoint``: ``a_j(q) = a_q(w(1 - t_j))``. The weight of
  cell ``j`` looks at the path at a time that lies after the cell for the
  first half of the cells, so the weighted variation is not adapted.
* ``predictable``: ``a_j(q) = a_q(w(t_{j-1}))``.
* ``constant``: ``a_j(q) = c``.

For the two path-dependent kinds the weight field is ``a(s, q) =
a_q(w(phi(s)))`` with ``phi(s) = 1 - s`` or ``phi(s) = s``; the Malliavin
derivative is then ``D_t a(s, q) = a_q'(w(phi(s))) 1{t <= phi(s)}``. All
double integrals against that indicator reduce to running integrals, which
is how the symbol module evaluates them.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from . import quad
from .paths import Coefficient, WienerGrid

KINDS = ("anticipative_endpoint", "predictable", "constant")


def _zero(x):
    return np.zeros(np.shape(x))


def weight_function(spec: str) -> Coefficient:
    """Weight catalog with closed-form derivatives.

    ``const:c``           a(x) = c
    ``linear``            a(x) = x
    ``sin2``              a(x) = 2 + sin(x)
    ``poly:c0,c1,...``    a(x) = c0 + c1 x + c2 x^2 + ...
    ``exp:c``             a(x) = exp(c x)
    """
    name, _, arg = spec.partition(":")
    if name == "const":
        c = float(arg) if arg else 1.0
        return Coefficient(spec, lambda x: np.full(np.shape(x), c), _zero, _zero)
    if name == "linear":
        return Coefficient(spec, lambda x: np.asarray(x, dtype=float), lambda x: np.ones(np.shape(x)), _zero)
    if name == "sin2":
        return Coefficient(spec, lambda x: 2 + np.sin(x), np.cos, lambda x: -np.sin(x))
    if name == "poly":
        p = np.polynomial.Polynomial([float(v) for v in arg.split(",")])
        d1, d2 = p.deriv(1), p.deriv(2)
        return Coefficient(spec, p, d1, d2)
    if name == "exp":
        c = float(arg) if arg else 1.0
        return Coefficient(spec, lambda x: np.exp(c * x), lambda x: c * np.exp(c * x), lambda x: c * c * np.exp(c * x))
    raise ValueError(f"unknown weight {spec!r}")


def _check_derivatives(fn: Coefficient, tol: float = 1e-6):
    x = np.random.default_rng(20240601).uniform(-2.0, 2.0, 10)
    e = 1e-5
    for lo, hi, name in ((fn.f, fn.d1, "first"), (fn.d1, fn.d2, "second")):
        fd = (lo(x + e) - lo(x - e)) / (2 * e)
        exact = hi(x)
        if not np.allclose(fd, exact, atol=tol, rtol=tol * 10):
            raise ValueError(f"{name} derivative of weight {fn.name!r} is inconsistent")


@dataclass(frozen=True)
class WeightFamily:
    kind: str
    funcs: dict
    Q: tuple

    def func(self, q: int) -> Coefficient:
        if q not in self.funcs:
            raise KeyError(f"order {q} not in Q={self.Q}")
        return self.funcs[q]

    @property
    def constant_value(self) -> dict:
        return {q: float(self.funcs[q].f(0.0)) for q in self.Q}


def make_family(kind: str, weight="const:1", Q=(2,)) -> WeightFamily:
    """Build a family; ``weight`` is a catalog spec, a ``Coefficient``, or a dict per order."""
    if kind not in KINDS:
        raise ValueError(f"unknown family kind {kind!r}")
    Q = tuple(sorted({int(q) for q in Q}))
    if not Q or Q[0] < 2:
        raise ValueError("orders in Q must be at least 2")
    if set(Q) & {q + 1 for q in Q}:
        raise ValueError("Q must not contain two consecutive orders")
    if isinstance(weight, dict):
        funcs = {q: weight_function(w) if isinstance(w, str) else w for q, w in weight.items()}
        if set(funcs) != set(Q):
            raise ValueError("weight dict keys must equal Q")
    else:
        fn = weight_function(weight) if isinstance(weight, str) else weight
        funcs = {q: fn for q in Q}
    for fn in funcs.values():
        _check_derivatives(fn)
    if kind == "constant":
        for fn in funcs.values():
            x = np.linspace(-3, 3, 7)
            if not np.allclose(fn.f(x), fn.f(0.0)):
                raise ValueError("constant family needs a constant weight")
    return WeightFamily(kind, funcs, Q)


def anchor_indices(fam: WeightFamily, grid: WienerGrid) -> np.ndarray:
    """Fine-grid index of the anchor time of each cell ``j = 1..n``."""
    j = np.arange(1, grid.n + 1)
    if fam.kind == "anticipative_endpoint":
        return (grid.n - j) * grid.R
    return (j - 1) * grid.R


def cutoff_cells(fam: WeightFamily, n: int) -> np.ndarray:
    """Largest ``k`` with ``I_k`` inside ``[0, anchor(j)]``, per cell ``j``."""
    j = np.arange(1, n + 1)
    if fam.kind == "anticipative_endpoint":
        return n - j
    if fam.kind == "predictable":
        return j - 1
    return np.zeros(n, dtype=int)


def weights(fam: WeightFamily, grid: WienerGrid, q: int, deriv: int = 0) -> np.ndarray:
    """``a_j(q)`` (or its ``deriv``-th derivative at the anchor) for all cells."""
    fn = fam.func(q)
    h = (fn.f, fn.d1, fn.d2)[deriv]
    if fam.kind == "constant":
        return h(np.zeros(grid.values.shape[:-1] + (grid.n,)))
    return h(grid.values[..., anchor_indices(fam, grid)])


def weight_at(fam: WeightFamily, grid: WienerGrid, j: int, q: int):
    if not 1 <= j <= grid.n:
        raise IndexError(f"cell index {j} outside 1..{grid.n}")
    return weights(fam, grid, q)[..., j - 1]


def overlap(fam: WeightFamily, n: int, j: int, k: int) -> float:
    """Lebesgue measure of ``I_k`` intersected with ``[0, anchor(j)]``."""
    if fam.kind == "constant":
        return 0.0
    anchor = 1 - j / n if fam.kind == "anticipative_endpoint" else (j - 1) / n
    lo, hi = (k - 1) / n, k / n
    return max(0.0, min(hi, anchor) - lo)


def gap_Dweight(fam: WeightFamily, grid: WienerGrid, j: int, k: int, q: int):
    """``D_{1_k} a_j(q)`` with the exact interval overlap."""
    if fam.kind == "predictable" or fam.kind == "anticipative_endpoint":
        return weights(fam, grid, q, deriv=1)[..., j - 1] * overlap(fam, grid.n, j, k)
    if fam.kind == "constant":
        return np.zeros(grid.values.shape[:-1])
    raise ValueError(f"unsupported family {fam.kind!r}")


def diag_Dweight(fam: WeightFamily, grid: WienerGrid, q: int) -> np.ndarray:
    """``D_{1_j} a_j(q)`` for all ``j`` at once."""
    n = grid.n
    if fam.kind == "constant":
        return np.zeros(grid.values.shape[:-1] + (n,))
    own = (np.arange(1, n + 1) <= cutoff_cells(fam, n)) / n
    return weights(fam, grid, q, deriv=1) * own


def _path_field(fam: WeightFamily, grid: WienerGrid, fn) -> np.ndarray:
    """``fn(w(phi(t)))`` at every fine node ``t``."""
    if fam.kind == "anticipative_endpoint":
        return fn(grid.values[..., ::-1])
    if fam.kind == "predictable":
        return fn(grid.values)
    return fn(np.zeros_like(grid.values))


def indicator_kind(fam: WeightFamily) -> str | None:
    """``'reverse'`` for ``1{t <= 1-s}``, ``'forward'`` for ``1{t <= s}``."""
    return {"anticipative_endpoint": "reverse", "predictable": "forward"}.get(fam.kind)


@dataclass
class LimitFields:
    """Limit fields of one path (or a batch) sampled on the fine grid.

    Two-parameter fields are stored through their separable factors:
    ``adot(t,s,q) = adot_s[q](s) * 1{t <= phi(s)}`` and
    ``aring(t,s,q) = aring_s[q](s) * 1{t <= phi(s)}``.
    """

    h: float
    times: np.ndarray
    kind: str | None
    a: dict
    adot_s: dict
    aring_s: dict
    adot2: np.ndarray
    addot2: np.ndarray
    G: np.ndarray
    DtG: np.ndarray
    X: np.ndarray
    DtX: np.ndarray
    Xddot: np.ndarray


def half_mask(times: np.ndarray) -> np.ndarray:
    """Trapezoid-consistent ``1{t <= 1/2}``: value 1/2 on the node at 1/2, so
    that a full-grid trapezoid sum equals the composite rule on ``[0, 1/2]``.
    Off-grid 1/2 falls back to the plain indicator.
    """
    m = (times <= 0.5 + 1e-12).astype(float)
    m[np.abs(times - 0.5) < 1e-12] = 0.5
    return m


def limit_fields(fam: WeightFamily, grid: WienerGrid) -> LimitFields:
    h = grid.fine_h
    t = grid.times
    shape = grid.values.shape
    a, a1, a2 = {}, {}, {}
    for q in fam.Q:
        fn = fam.func(q)
        a[q] = _path_field(fam, grid, fn.f)
        if fam.kind == "constant":
            a1[q] = np.zeros(shape)
            a2[q] = np.zeros(shape)
        else:
            a1[q] = _path_field(fam, grid, fn.d1)
            a2[q] = _path_field(fam, grid, fn.d2)
    zeros = np.zeros(shape)
    if 2 in fam.Q and fam.kind == "anticipative_endpoint":
        mask = half_mask(t)
        adot2 = a1[2] * mask
        addot2 = a2[2] * mask
    else:
        adot2, addot2 = zeros, zeros
    G = sum(factorial(q) * quad.trapz(a[q] ** 2, h) for q in fam.Q)
    G = np.asarray(G, dtype=float)
    DtG = dt_g_field(fam, grid)
    return LimitFields(
        h=h,
        times=t,
        kind=indicator_kind(fam),
        a=a,
        adot_s=a1,
        aring_s=a2,
        adot2=adot2,
        addot2=addot2,
        G=G,
        DtG=DtG,
        X=grid.values[..., -1].copy(),
        DtX=np.ones(shape),
        Xddot=zeros,
    )


def g_infinity(fam: WeightFamily, grid: WienerGrid):
    """``G = sum_q q! int_0^1 a(t,q)^2 dt`` by trapezoid on the fine grid."""
    h = grid.fine_h
    return sum(factorial(q) * quad.trapz(_path_field(fam, grid, fam.func(q).f) ** 2, h) for q in fam.Q)


def dt_g_field(fam: WeightFamily, grid: WienerGrid) -> np.ndarray:
    """``D_t G`` at every fine node: ``sum_q 2 q! int_t^1 (a_q a_q')(w_u) du``."""
    if fam.kind == "constant":
        return np.zeros(grid.values.shape)
    h = grid.fine_h
    out = np.zeros(grid.values.shape)
    for q in fam.Q:
        fn = fam.func(q)
        out += 2 * factorial(q) * quad.tail_trapz(fn.f(grid.values) * fn.d1(grid.values), h)
    return out


def dt_g_infinity(fam: WeightFamily, grid: WienerGrid, t: float):
    """``D_t G`` at time ``t`` (snapped to the nearest fine node)."""
    if not 0 <= t <= 1:
        raise ValueError("t must lie in [0, 1]")
    i = int(round(t * grid.N))
    return dt_g_field(fam, grid)[..., i]


def bump_derivative(functional, grid: WienerGrid, t: float, eps: float = 1e-4):
    """Central difference of ``functional`` along the path shift ``eps * 1[t, 1]``.

    For a path functional ``F`` this approximates ``D_t F``. The step sits
    on a grid node and takes the value 1/2 there, matching the trapezoid
    rule used for time integrals.
    """
    i = int(round(t * grid.N))
    shift = np.zeros(grid.N + 1)
    shift[i:] = 1.0
    shift[i] = 0.5 if 0 < i else 1.0
    up = WienerGrid(grid.n, grid.R, grid.values + eps * shift, grid.seed, grid.rep_index)
    dn = WienerGrid(grid.n, grid.R, grid.values - eps * shift, grid.seed, grid.rep_index)
    return (functional(up) - functional(dn)) / (2 * eps)
