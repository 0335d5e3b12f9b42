"""Order calculus for multilinear forms in multiple Wiener integrals.

A form ``I_n = n^alpha sum_{j_1..j_m} A_{j} prod_i I_{q_i}(1_{j_i}^{⊗q_i})``
is described by ``alpha`` and the orders ``q_1..q_m``. Its exponent
``e = alpha - qbar/2 + m - m_1/2`` (``-inf`` if an order is negative)
predicts ``||I_n||_p = O(n^e)``. Exponents are exact fractions.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

NEG_INF = -math.inf


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class ChaosForm:
    alpha: Fraction
    orders: tuple
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "alpha", _frac(self.alpha))
        object.__setattr__(self, "orders", tuple(int(q) for q in self.orders))
        if not self.orders:
            raise ValueError("a form needs at least one factor")

    @property
    def m(self) -> int:
        return len(self.orders)

    @property
    def qbar(self) -> int:
        return sum(self.orders)

    @property
    def m1(self) -> int:
        return sum(1 for q in self.orders if q > 0)

    @property
    def m0(self) -> int:
        return sum(1 for q in self.orders if q == 0)


def exponent(form: ChaosForm):
    """Exact exponent as a ``Fraction``, or ``-inf``."""
    if min(form.orders) < 0:
        return NEG_INF
    return form.alpha - Fraction(form.qbar, 2) + form.m - Fraction(form.m1, 2)


def exponent_of_sum(forms) -> Fraction | float:
    """A sum of forms is bounded by its worst summand."""
    return max(exponent(f) for f in forms)


def project_un(form: ChaosForm, q: int, Q=None, refined: bool = False):
    """Bound on the exponent of ``D_{u_n(q)} I_n``.

    Not worse than ``e(I_n)``, and half an order better when no factor has
    order ``q``. With ``refined=True`` the half order is gained as soon as
    some factor has an order different from ``q``.
    """
    if q < 2:
        raise ValueError("invalid integrand order")
    if Q is not None and q not in set(Q):
        raise ValueError(f"order {q} is not in Q")
    e = exponent(form)
    if refined:
        gain = any(qi != q for qi in form.orders)
    else:
        gain = q not in form.orders
    return e - Fraction(1, 2) if gain else e


def project_D(form: ChaosForm, i: int):
    """Bound on the exponent of ``|D^i I_n|``: derivatives keep the order."""
    if i < 0:
        raise ValueError("derivative order must be non-negative")
    return exponent(form)


def power_exponent(p, q) -> Fraction:
    """``L^{2k}`` order of ``sum_j prod_i I_{q_i}(1_j^{⊗q_i})^{p_i}``: ``-xi/2``.

    ``xi = p.q - m - #{i: p_i >= 2 and p_i q_i even}``.
    """
    p, q = list(p), list(q)
    if len(p) != len(q):
        raise ValueError("p and q must have the same length")
    if any(v < 1 for v in p + q):
        raise ValueError("entries must be positive")
    xi = sum(a * b for a, b in zip(p, q)) - len(p) - sum(1 for a, b in zip(p, q) if a >= 2 and (a * b) % 2 == 0)
    return Fraction(-xi, 2)


def multilinear_bound(k: int, form: ChaosForm) -> Fraction:
    """``||I_n||_{2k}`` rate ``-(qbar - m)/2`` for positive orders."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if min(form.orders) <= 0:
        raise ValueError("theorem requires positive orders")
    return Fraction(-(form.qbar - form.m), 2)


def integrated_bound(inner_rate, window_measures=()) -> Fraction:
    """Rate of an integral of localized forms: inner rate plus window sizes."""
    return _frac(inner_rate) + sum((_frac(w) for w in window_measures), Fraction(0))


@dataclass
class RateEstimate:
    slope: float
    se: float
    rows: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def fit_slope(n_grid, norms, log_se):
    """Least-squares slope of ``log norm`` on ``log n`` with delta-method error."""
    x = np.log(np.asarray(n_grid, dtype=float))
    y = np.log(np.asarray(norms, dtype=float))
    xc = x - x.mean()
    w = xc / np.sum(xc * xc)
    return float(np.sum(w * y)), float(np.sqrt(np.sum((w * np.asarray(log_se)) ** 2)))


def sample_norm(values: np.ndarray, p: int):
    """``(mean |X|^p)^{1/p}`` and its standard error."""
    a = np.abs(values) ** p
    m = a.mean()
    se_m = a.std(ddof=1) / np.sqrt(a.size)
    norm = m ** (1 / p)
    return norm, norm * se_m / (p * m), se_m / (p * m)


def measure_rate(
    sampler: Callable,
    n_grid,
    reps: int,
    p: int = 2,
    seed: int = 0,
    R: int = 1,
    workers: int | None = None,
) -> RateEstimate:
    """Monte Carlo slope of ``log ||F_n||_p`` against ``log n``.

    ``sampler(grid)`` maps a batch of Brownian paths on the grid with ``n``
    cells and refinement ``R`` to one value per path.
    """
    return measure_rates({"_": sampler}, n_grid, reps, p, seed, R, workers)["_"]


def measure_rates(
    samplers: dict,
    n_grid,
    reps: int,
    p: int = 2,
    seed: int = 0,
    R: int = 1,
    workers: int | None = None,
) -> dict:
    """``measure_rate`` for several samplers evaluated on the same paths."""
    from .parallel import map_blocks
    from .paths import sample_wiener

    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n_grid must be strictly increasing with at least 3 points")
    if p % 2 or p < 2:
        raise ValueError("p must be an even integer")
    notes = []
    if reps < 1000:
        msg = f"only {reps} replications; slope error may be unreliable"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    names = list(samplers)
    rows = {k: [] for k in names}
    log_se = {k: [] for k in names}
    for n in n_grid:

        def block(idx, n=n):
            g = sample_wiener(n, R, seed, idx, "rate")
            return {k: np.asarray(samplers[k](g), dtype=float) for k in names}

        vals = map_blocks(block, reps, workers=workers)
        for k in names:
            norm, se, lse = sample_norm(vals[k], p)
            rows[k].append((n, norm, se))
            log_se[k].append(lse)
    out = {}
    for k in names:
        slope, se = fit_slope(n_grid, [r[1] for r in rows[k]], log_se[k])
        out[k] = RateEstimate(slope, se, rows[k], list(notes))
    return out


def _catalog():
    from .estimators import qtan_terms, section5_error, variation
    from .weights import make_family

    const = make_family("constant", "const:1")
    endpoint = make_family("anticipative_endpoint", "sin2")
    pred3 = make_family("predictable", "sin2", Q=(3,))

    def third(g):
        return variation(pred3, g).v_n / np.sqrt(g.n)

    def cubic(g):
        return (variation(const, g).v_n / np.sqrt(g.n)) ** 3

    def riemann(g):
        return section5_error(endpoint, g).n2 / g.n

    return {
        "variation": (ChaosForm(Fraction(1, 2), (2,), "weighted quadratic variation"), lambda g: variation(const, g).v_n, 1),
        "third": (ChaosForm(Fraction(1, 2), (3,), "third-order weighted sum"), third, 1),
        "i4": (ChaosForm(-1, (1, 1), "second-derivative q-tangent piece"), lambda g: qtan_terms(endpoint, g).i4, 1),
        "cubic": (ChaosForm(0, (2, 2, 2), "cube of a second-order sum"), cubic, 1),
        "riemann": (ChaosForm(-1, (1,), "Riemann-sum gap of the endpoint integral"), riemann, 8),
        "qtan": (ChaosForm(0, (2,), "q-tangent minus its limit"), lambda g: qtan_terms(endpoint, g).diagnostic, 1),
    }


def rate_catalog() -> dict:
    """Built-in ``name -> (form, sampler, refinement)`` examples."""
    return _catalog()
