import numpy as np
import pytest

from wexp.estimators import (
    qtan_diagnostic,
    qtan_terms,
    section5_error,
    skorohod_direct,
    variation,
)
from wexp.paths import WienerGrid, sample_wiener
from wexp.weights import make_family, weights

FAMILIES = [
    ("constant", "const:1.5", (2,)),
    ("anticipative_endpoint", "sin2", (2,)),
    ("anticipative_endpoint", "linear", (2, 4)),
    ("predictable", "poly:1,0.3,0.2", (3,)),
    ("predictable", "sin2", (2,)),
]


@pytest.mark.parametrize("kind,spec,Q", FAMILIES)
def test_split_identity(kind, spec, Q):
    fam = make_family(kind, spec, Q)
    g = sample_wiener(64, 2, 1, np.arange(50))
    s = variation(fam, g)
    direct = skorohod_direct(fam, g)
    assert np.allclose(s.v_n - s.n_n / np.sqrt(64), direct, rtol=1e-12, atol=1e-12)
    assert np.allclose(s.m_n, direct, rtol=1e-12, atol=1e-12)


def test_predictable_correction_vanishes():
    fam = make_family("predictable", "sin2")
    g = sample_wiener(32, 1, 2, np.arange(10))
    assert np.all(variation(fam, g).n_n == 0)


@pytest.mark.parametrize("Q,c,target", [((2,), 1.0, 2.0), ((2,), 1.7, 2 * 1.7**2), ((3,), 1.0, 6.0)])
def test_variation_variance(Q, c, target):
    fam = make_family("constant", f"const:{c}", Q)
    g = sample_wiener(32, 1, 3, np.arange(40000))
    v = variation(fam, g).v_n
    var = v.var()
    se = np.sqrt(np.var((v - v.mean()) ** 2) / v.size)
    assert abs(var - target) < 5 * se


def test_section5_constant_reduces():
    fam = make_family("constant", "const:1")
    g = sample_wiener(50, 4, 0, np.arange(5))
    s = section5_error(fam, g)
    assert np.allclose(s.n1, 0) and np.allclose(s.n2, 0, atol=1e-12)
    expected = np.sqrt(50) * (np.sum(g.coarse_increments**2, axis=-1) - 1)
    assert np.allclose(s.z_n, expected)


@pytest.mark.parametrize("spec", ["linear", "sin2"])
def test_section5_identity(spec):
    fam = make_family("anticipative_endpoint", spec)
    g = sample_wiener(32, 8, 5, np.arange(20))
    s = section5_error(fam, g)
    assert np.allclose(s.m_n, s.m_direct, atol=1e-12)


def test_section5_linear_moments():
    fam = make_family("anticipative_endpoint", "linear")
    g = sample_wiener(128, 4, 6, np.arange(20000))
    z = section5_error(fam, g).z_n
    assert abs(z.mean()) < 5 * z.std() / np.sqrt(z.size)
    assert z.var() == pytest.approx(1.0, abs=0.06)


def test_r_doubling_quadrature_error_halves():
    fam = make_family("anticipative_endpoint", "sin2")
    fine = sample_wiener(16, 128, 7, np.arange(200))
    z = {R: section5_error(fam, WienerGrid(16, R, fine.values[:, :: 128 // R].copy())).z_n for R in (32, 64, 128)}
    d1 = np.sqrt(np.mean((z[32] - z[64]) ** 2))
    d2 = np.sqrt(np.mean((z[64] - z[128]) ** 2))
    assert d1 < 1e-2
    assert d2 < 0.75 * d1


def _directional(fam, g, direction, eps=1e-6):
    """Central difference of M_n along the path shift eps * int_0^t u."""
    shift = np.concatenate([[0.0], np.cumsum(direction)])
    up = WienerGrid(g.n, g.R, g.values + eps * shift)
    dn = WienerGrid(g.n, g.R, g.values - eps * shift)
    return (skorohod_direct(fam, up) - skorohod_direct(fam, dn)) / (2 * eps)


@pytest.mark.parametrize(
    "kind,spec", [("anticipative_endpoint", "sin2"), ("anticipative_endpoint", "poly:1,0.5,0.4"), ("predictable", "sin2"), ("constant", "const:2")]
)
def test_qtangent_matches_directional_derivative(kind, spec):
    fam = make_family(kind, spec)
    for rep in range(5):
        g = sample_wiener(16, 3, 11, rep)
        n = g.n
        u_cells = np.sqrt(n) * weights(fam, g, 2) * g.coarse_increments
        u_fine = np.repeat(u_cells, g.R) * g.fine_h
        fd = _directional(fam, g, u_fine)
        assert fd == pytest.approx(qtan_terms(fam, g).total, rel=1e-6, abs=1e-7)


def test_qtangent_constant_example():
    fam = make_family("constant", "const:1")
    g = sample_wiener(64, 1, 0, np.arange(3000))
    t = qtan_terms(fam, g)
    d = g.coarse_increments
    assert np.allclose(t.total, 2 * np.sum(d * d, axis=-1))
    diag = qtan_diagnostic(fam, g)
    assert abs(diag.mean()) < 3 * diag.std() / np.sqrt(diag.size)
