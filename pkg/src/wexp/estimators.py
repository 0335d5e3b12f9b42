"""Path-wise statistics: weighted variations and their Skorohod splits.

All functions accept single paths or batches (leading axis) and return
arrays with the batch shape.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quad
from .chaos import hermite, linearize_product, multiple_integral
from .paths import WienerGrid
from .weights import (
    WeightFamily,
    cutoff_cells,
    diag_Dweight,
    g_infinity,
    weights,
)


@dataclass
class VariationSample:
    v_n: np.ndarray
    m_n: np.ndarray
    n_n: np.ndarray
    n: int
    extra: dict = field(default_factory=dict)


def _scaled(grid: WienerGrid) -> np.ndarray:
    return np.sqrt(grid.n) * grid.coarse_increments


def variation(fam: WeightFamily, grid: WienerGrid) -> VariationSample:
    """``V_n = n^{-1/2} sum_q sum_j a_j(q) He_q(sqrt(n) dw_j)`` and its split.

    ``N_n = sum_q n^{q/2} sum_j (D_{1_j} a_j(q)) I_{q-1}`` and
    ``M_n = V_n - n^{-1/2} N_n``.
    """
    n = grid.n
    x = _scaled(grid)
    v = 0.0
    nn = 0.0
    for q in fam.Q:
        v = v + np.sum(weights(fam, grid, q) * hermite(q, x), axis=-1)
        nn = nn + np.sum(diag_Dweight(fam, grid, q) * hermite(q - 1, x), axis=-1)
    v = v / np.sqrt(n)
    nn = nn * np.sqrt(n)
    return VariationSample(np.asarray(v), np.asarray(v - nn / np.sqrt(n)), np.asarray(nn), n)


def skorohod_direct(fam: WeightFamily, grid: WienerGrid) -> np.ndarray:
    """``M_n`` assembled as ``sum_q n^{(q-1)/2} sum_j [a_j I_q - (D_{1_j} a_j) I_{q-1}]``."""
    n = grid.n
    h = 1.0 / n
    d = grid.coarse_increments
    out = 0.0
    for q in fam.Q:
        iq = h ** (q / 2) * hermite(q, d / np.sqrt(h))
        iq1 = h ** ((q - 1) / 2) * hermite(q - 1, d / np.sqrt(h))
        term = np.sum(weights(fam, grid, q) * iq - diag_Dweight(fam, grid, q) * iq1, axis=-1)
        out = out + n ** ((q - 1) / 2) * term
    return np.asarray(out)


@dataclass
class Section5Sample:
    z_n: np.ndarray
    m_n: np.ndarray
    n1: np.ndarray
    n2: np.ndarray
    v_inf: np.ndarray
    v_bold: np.ndarray
    m_direct: np.ndarray
    n: int


def _require_section5(fam: WeightFamily):
    if fam.Q != (2,) or fam.kind not in ("anticipative_endpoint", "constant"):
        raise ValueError("needs an endpoint-anchored or constant family with Q={2}")


def endpoint_cell_integrals(fam: WeightFamily, grid: WienerGrid) -> np.ndarray:
    """``int_{I_j} a(w_{1-t}) dt`` for every cell ``j`` (fine-grid trapezoid)."""
    fn = fam.func(2)
    if fam.kind == "constant":
        return fn.f(np.zeros(grid.values.shape[:-1] + (grid.n,))) / grid.n
    by_u = quad.cell_integrals(fn.f(grid.values), grid.R, grid.fine_h)
    # cell j in t corresponds to cell n - j + 1 in u = 1 - t
    return by_u[..., ::-1]


def section5_error(fam: WeightFamily, grid: WienerGrid) -> Section5Sample:
    """Scaled error of the endpoint-weighted quadratic variation.

    ``Z_n = sqrt(n) (sum_j a(w_{1-t_j}) dw_j^2 - int_0^1 a(w_{1-t}) dt)``
    with ``N1 = n sum_j (D_{1_j} a_j) dw_j`` and
    ``N2 = n sum_j int_{I_j} (a_j - a(w_{1-t})) dt`` so that
    ``Z_n = M_n + n^{-1/2} (N1 + N2)``.
    """
    _require_section5(fam)
    n = grid.n
    d = grid.coarse_increments
    a = weights(fam, grid, 2)
    v_bold = np.sum(a * d * d, axis=-1)
    cells = endpoint_cell_integrals(fam, grid)
    v_inf = np.sum(cells, axis=-1)
    z = np.sqrt(n) * (v_bold - v_inf)
    n1 = n * np.sum(diag_Dweight(fam, grid, 2) * d, axis=-1)
    n2 = n * np.sum(a / n - cells, axis=-1)
    m = z - (n1 + n2) / np.sqrt(n)
    return Section5Sample(z, m, n1, n2, v_inf, v_bold, skorohod_direct(fam, grid), n)


def section5_z(fam: WeightFamily, grid: WienerGrid) -> np.ndarray:
    """``Z_n`` of ``section5_error`` without the decomposition."""
    _require_section5(fam)
    d = grid.coarse_increments
    v_bold = np.sum(weights(fam, grid, 2) * d * d, axis=-1)
    return np.sqrt(grid.n) * (v_bold - np.sum(endpoint_cell_integrals(fam, grid), axis=-1))


def prefix_by_cutoff(values: np.ndarray, cutoffs: np.ndarray) -> np.ndarray:
    """``S_j = sum_{k <= cutoffs[j]} values[k]`` (1-based ``k``)."""
    c = np.concatenate([np.zeros(values.shape[:-1] + (1,)), np.cumsum(values, axis=-1)], axis=-1)
    return c[..., cutoffs]


@dataclass
class QTangentTerms:
    i1: np.ndarray
    i2: np.ndarray
    i3: np.ndarray
    i4: np.ndarray
    g_inf: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.i1 + self.i2 + self.i3 + self.i4

    @property
    def diagnostic(self) -> np.ndarray:
        return self.total - self.g_inf


def qtan_terms(fam: WeightFamily, grid: WienerGrid) -> QTangentTerms:
    """The four pieces of ``D_{u_n} M_n`` for ``Q = {2}``.

    With ``l(k, j)`` the overlap of ``I_k`` with ``[0, anchor(j)]`` and
    ``S_j = sum_{k <= cutoff(j)} a_k dw_k``:

    * ``I1 = 2 sum_j a_j^2 dw_j^2`` (product ``I_1 I_1 = I_2 + h``)
    * ``I2 = sum_j a_j' I_2(j) S_j``
    * ``I3 = -sum_j (D_{1_j} a_j) a_j dw_j``
    * ``I4 = -sum_j a_j'' l(j, j) dw_j S_j``
    """
    if fam.Q != (2,):
        raise ValueError("q-tangent terms are implemented for Q={2}")
    n = grid.n
    h = 1.0 / n
    d = grid.coarse_increments
    a = weights(fam, grid, 2)
    prod = linearize_product([1, 1])
    sq = sum(c * float(n) ** p * multiple_integral(r, d, h) for r, (c, p) in prod.items())
    i1 = 2 * np.sum(a * a * sq, axis=-1)
    if fam.kind == "constant":
        z = np.zeros_like(i1)
        return QTangentTerms(i1, z, z, z, np.asarray(g_infinity(fam, grid)))
    cut = cutoff_cells(fam, n)
    S = prefix_by_cutoff(a * d, cut)
    a1 = weights(fam, grid, 2, deriv=1)
    a2 = weights(fam, grid, 2, deriv=2)
    own = (np.arange(1, n + 1) <= cut) / n
    i2 = np.sum(a1 * (d * d - h) * S, axis=-1)
    i3 = -np.sum(diag_Dweight(fam, grid, 2) * a * d, axis=-1)
    i4 = -np.sum(a2 * own * d * S, axis=-1)
    return QTangentTerms(i1, i2, i3, i4, np.asarray(g_infinity(fam, grid)))


def qtan_diagnostic(fam: WeightFamily, grid: WienerGrid) -> np.ndarray:
    """``D_{u_n} M_n - G_inf``; vanishes in probability at rate ``n^{-1/2}``."""
    return qtan_terms(fam, grid).diagnostic
