"""Multiple Wiener integrals of indicator tensors and their product rules.

For a cell of length ``h`` with Brownian increment ``d``, the ``q``-fold
integral of the tensor power of the cell indicator is
``h**(q/2) * He_q(d / sqrt(h))`` with ``He_q`` the probabilists' Hermite
polynomial. Products of such integrals on the same cell linearize into a
finite combination of lower orders; the integer coefficients are produced
here and cross-checked against exact polynomial arithmetic.
"""

from __future__ import annotations

from math import comb, factorial

import numpy as np

MAX_ORDER = 20


def hermite(q: int, x):
    """Probabilists' Hermite polynomial He_q evaluated elementwise.

    Uses the three-term recurrence ``He_{k+1} = x He_k - k He_{k-1}``.
    Negative orders return zeros, matching the convention that integrals
    of negative order vanish.
    """
    x = np.asarray(x, dtype=float)
    if q < 0:
        return np.zeros_like(x)
    prev = np.ones_like(x)
    if q == 0:
        return prev
    cur = x.copy()
    for k in range(1, q):
        prev, cur = cur, x * cur - k * prev
    return cur


def hermite_table(max_order: int, x) -> np.ndarray:
    """Stack ``He_0 .. He_max_order`` along a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((max_order + 1,) + x.shape)
    out[0] = 1.0
    if max_order >= 1:
        out[1] = x
    for k in range(1, max_order):
        out[k + 1] = x * out[k] - k * out[k - 1]
    return out


def multiple_integral(q: int, increment, cell_length: float):
    """``I_q(1_j^{⊗q})`` from the cell increment and cell length."""
    if cell_length <= 0:
        raise ValueError("cell_length must be positive")
    d = np.asarray(increment, dtype=float)
    if not np.all(np.isfinite(d)):
        raise FloatingPointError("non-finite increment")
    if q < 0:
        return np.zeros_like(d)
    return cell_length ** (q / 2) * hermite(q, d / np.sqrt(cell_length))


def _check_orders(orders):
    for q in orders:
        if int(q) != q:
            raise ValueError(f"order {q!r} is not an integer")
        if q > MAX_ORDER:
            raise OverflowError(f"order {q} exceeds the supported maximum {MAX_ORDER}")


def _pair(q1: int, q2: int, nu: int) -> int:
    if q1 < 0 or q2 < 0 or nu < 0 or nu > min(q1, q2):
        return 0
    return factorial(nu) * comb(q1, nu) * comb(q2, nu)


def coeff2(q1: int, q2: int, nu: int) -> int:
    """Coefficient of the contraction of order ``nu`` in ``I_q1 * I_q2``."""
    _check_orders((q1, q2))
    if q1 < 0 or q2 < 0 or nu < 0 or nu > min(q1, q2):
        return 0
    return factorial(nu) * comb(q1, nu) * comb(q2, nu)


def coeff3(q1: int, q2: int, q3: int, nu: int) -> int:
    """Coefficient of total contraction ``nu`` in ``I_q1 * I_q2 * I_q3``.

    The product ``I_q2 I_q3`` is expanded first with inner contraction
    ``nu1``; the result of order ``q2 + q3 - 2 nu1`` is then multiplied by
    ``I_q1`` with contraction ``nu - nu1``.
    """
    _check_orders((q1, q2, q3))
    if min(q1, q2, q3) < 0 or nu < 0:
        return 0
    total = 0
    for nu1 in range(min(q2, q3) + 1):
        if not (nu1 <= nu <= min(q1 + nu1, q2 + q3 - nu1)):
            continue
        inner = factorial(nu1) * comb(q2, nu1) * comb(q3, nu1)
        r = q2 + q3 - 2 * nu1
        k = nu - nu1
        total += inner * factorial(k) * comb(q1, k) * comb(r, k)
    return total


def coeff3_top(q1: int, q2: int, q3: int) -> int:
    """Coefficient of the order-zero term of ``I_q1 I_q2 I_q3``.

    Nonzero only when the orders sum to an even number and satisfy the
    triangle inequalities; then it equals the expected triple product.
    """
    _check_orders((q1, q2, q3))
    s = q1 + q2 + q3
    if min(q1, q2, q3) < 0 or s % 2:
        return 0
    a, b, c = (q1 + q2 - q3) // 2, (q2 + q3 - q1) // 2, (q1 + q3 - q2) // 2
    if min(a, b, c) < 0:
        return 0
    return factorial(q1) * factorial(q2) * factorial(q3) // (
        factorial(a) * factorial(b) * factorial(c)
    )


def linearize_product(orders) -> dict[int, tuple[int, int]]:
    """Expand a product of same-cell integrals into single integrals.

    Returns ``{order: (coefficient, n_power)}`` meaning
    ``prod_i I_{q_i} = sum coefficient * n**n_power * I_order`` with
    ``h = 1/n``; each surviving order comes from exactly one total
    contraction ``nu`` and carries ``n_power = -nu``. Any negative order
    makes the product vanish. Products of four or more factors are folded
    pairwise from the left.
    """
    orders = [int(q) for q in orders]
    _check_orders(orders)
    if any(q < 0 for q in orders):
        return {}
    if not orders:
        return {0: (1, 0)}
    if len(orders) == 3:
        q1, q2, q3 = orders
        s = q1 + q2 + q3
        out = {}
        for nu in range(s // 2 + 1):
            c = coeff3(q1, q2, q3, nu)
            if c:
                out[s - 2 * nu] = (c, -nu)
        return out
    acc = {orders[0]: 1}
    for q in orders[1:]:
        nxt: dict[int, int] = {}
        for p, c in acc.items():
            for nu in range(min(p, q) + 1):
                r = p + q - 2 * nu
                nxt[r] = nxt.get(r, 0) + c * _pair(p, q, nu)
        acc = nxt
    s = sum(orders)
    return {r: (c, -((s - r) // 2)) for r, c in acc.items() if c}


def _poly_mul(a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        if x:
            for j, y in enumerate(b):
                out[i + j] += x * y
    return out


def hermite_monomial_coeffs(q: int) -> list[int]:
    """Integer monomial coefficients of He_q, lowest degree first."""
    prev, cur = [1], [0, 1]
    if q == 0:
        return prev
    for k in range(1, q):
        shifted = [0] + cur
        nxt = [s - k * (prev[i] if i < len(prev) else 0) for i, s in enumerate(shifted)]
        prev, cur = cur, nxt
    return cur


def linearization_oracle(orders) -> dict[int, int]:
    """Exact He-basis coefficients of ``prod_i He_{q_i}`` by integer algebra.

    Independent of the contraction formulas: the Hermite polynomials are
    multiplied as integer monomial polynomials and the product is peeled
    back into the He basis from the top degree down. On a cell of length
    ``1/n`` the coefficient of ``He_r`` corresponds to ``I_r`` with power
    ``n**(-(sum(orders) - r)/2)``.
    """
    poly = [1]
    for q in orders:
        poly = _poly_mul(poly, hermite_monomial_coeffs(int(q)))
    out = {}
    rem = poly[:]
    for r in range(len(rem) - 1, -1, -1):
        c = rem[r]
        if c:
            out[r] = c
            h = hermite_monomial_coeffs(r)
            for i, v in enumerate(h):
                rem[i] -= c * v
    return out


def coefficient_table(max_q: int) -> list[tuple[int, int, int, int, int]]:
    """Rows ``(q1, q2, q3, nu, c)`` of all nonzero triple coefficients."""
    _check_orders((max_q,))
    rows = []
    for q1 in range(max_q + 1):
        for q2 in range(max_q + 1):
            for q3 in range(max_q + 1):
                for nu in range((q1 + q2 + q3) // 2 + 1):
                    c = coeff3(q1, q2, q3, nu)
                    if c:
                        rows.append((q1, q2, q3, nu, c))
    return rows
