import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wexp.chaos import hermite
from wexp.expansion import (
    TEST_FUNCTIONS,
    cdf_terms,
    compare_distributions,
    density_terms,
    expansion_report,
    fd_derivative,
    gauss_mean,
    limit_sample,
    target_sample,
    test_function as make_tf,
)
from wexp.weights import make_family

SMOOTH = [f for f in TEST_FUNCTIONS if f != "cdf"]


@pytest.mark.parametrize("name", SMOOTH)
def test_catalog_derivatives_match_differences(name):
    tf = make_tf(name)
    rng = np.random.default_rng(1)
    z, x = rng.uniform(-2, 2, 10), rng.uniform(-2, 2, 10)
    e = 1e-6
    for a in range(0, 6):
        for b in range(0, 3):
            if a + b == 0:
                continue
            if a > 0:
                lower = tf.deriv(a - 1, b)
                fd = (lower(z + e, x) - lower(z - e, x)) / (2 * e)
            else:
                lower = tf.deriv(a, b - 1)
                fd = (lower(z, x + e) - lower(z, x - e)) / (2 * e)
            assert np.allclose(tf.deriv(a, b)(z, x), fd, atol=1e-6), (a, b)


def test_fd_fallback():
    f = lambda z, x: np.exp(z) * np.cos(x)
    z, x = np.array([0.3, -1.0]), np.array([0.5, 2.0])
    assert np.allclose(fd_derivative(f, 1, 0, z, x), np.exp(z) * np.cos(x), rtol=1e-6)
    assert np.allclose(fd_derivative(f, 2, 1, z, x), -np.exp(z) * np.sin(x), rtol=1e-3)
    assert np.allclose(fd_derivative(f, 3, 0, z, x), np.exp(z) * np.cos(x), rtol=1e-2)


@given(st.floats(0.1, 10), st.floats(-3, 3))
@settings(max_examples=30, deadline=None)
def test_gauss_mean_closed_forms(G, X):
    G, X = np.array([G]), np.array([X])
    assert gauss_mean(make_tf("z2"), 0, 0, G, X)[0] == pytest.approx(G[0])
    assert gauss_mean(make_tf("z3"), 0, 0, G, X)[0] == pytest.approx(0, abs=1e-10)
    assert gauss_mean(make_tf("z3"), 1, 0, G, X)[0] == pytest.approx(3 * G[0])
    assert gauss_mean(make_tf("sinz"), 1, 0, G, X)[0] == pytest.approx(math.exp(-G[0] / 2))
    assert gauss_mean(make_tf("zx"), 1, 0, G, X)[0] == pytest.approx(X[0])


@given(st.floats(0.2, 5), st.floats(-4, 4), st.integers(0, 5))
@settings(max_examples=40, deadline=None)
def test_cdf_closed_form_matches_density_route(G, c, a):
    # E[d^a 1{sqrt(G) zeta <= c}] = int_{-inf}^c (-d)^a phi = -G^{-(a-1)/2} He_{a-1} phi(c) for a >= 1
    from scipy.integrate import quad

    tf = make_tf(f"cdf:{c}")
    got = gauss_mean(tf, a, 0, np.array([G]), np.array([0.0]))[0]
    dens = lambda z: G ** (-a / 2) * hermite(a, z / math.sqrt(G)) * math.exp(-z * z / (2 * G)) / math.sqrt(2 * math.pi * G)
    want = quad(dens, -np.inf, c, epsabs=1e-12)[0]
    assert got == pytest.approx(want, abs=1e-8)


@pytest.fixture(scope="module")
def unit_limit():
    return limit_sample(make_family("anticipative_endpoint", "const:1"), 300, seed=2, M=64)


@pytest.fixture(scope="module")
def sin_limit():
    return limit_sample(make_family("anticipative_endpoint", "sin2"), 2000, seed=2, M=256)


def test_unit_weight_density_is_edgeworth(unit_limit):
    z = np.linspace(-6, 6, 61)
    for n in (16, 256):
        p0, p1 = density_terms(unit_limit, n, z)
        phi = np.exp(-z * z / 4) / np.sqrt(4 * np.pi)
        want = phi * (1 + n**-0.5 * (4 / 3) * 2**-1.5 * hermite(3, z / np.sqrt(2)))
        assert np.max(np.abs(p1 - want)) < 1e-10
        assert np.max(np.abs(p0 - phi)) < 1e-12


@pytest.mark.parametrize("n", [16, 64, 1024])
def test_density_normalized(sin_limit, n):
    z = np.linspace(-14, 14, 2801)
    p0, p1 = density_terms(sin_limit, n, z)
    h = z[1] - z[0]
    assert np.trapezoid(p0, dx=h) == pytest.approx(1, abs=1e-4)
    assert np.trapezoid(p1, dx=h) == pytest.approx(1, abs=1e-4)


def test_cdf_is_integral_of_density(sin_limit):
    z = np.linspace(-3, 3, 13)
    e = 1e-4
    Fp = cdf_terms(sin_limit, 64, z + e)
    Fm = cdf_terms(sin_limit, 64, z - e)
    p0, p1 = density_terms(sin_limit, 64, z)
    assert np.allclose((Fp[0] - Fm[0]) / (2 * e), p0, atol=1e-7)
    assert np.allclose((Fp[1] - Fm[1]) / (2 * e), p1, atol=1e-7)


def test_marginalization_expectation_vs_density(sin_limit):
    L = 14 * np.sqrt(sin_limit.G.max())
    z = np.linspace(-L, L, 16001)
    p0, p1 = density_terms(sin_limit, 64, z)
    h = z[1] - z[0]
    fam = make_family("anticipative_endpoint", "sin2")
    tgt = target_sample(fam, 64, 10, seed=1)
    for name, g in (("z3", z**3), ("sinz", np.sin(z)), ("z2", z**2)):
        rep = expansion_report(make_tf(name), sin_limit, tgt)
        assert rep.first == pytest.approx(np.trapezoid(g * p1, dx=h), abs=1e-6)
        assert rep.zeroth == pytest.approx(np.trapezoid(g * p0, dx=h), abs=1e-6)


def test_unit_weight_third_moment(unit_limit):
    fam = make_family("anticipative_endpoint", "const:1")
    n = 256
    tgt = target_sample(fam, n, 20000, seed=4)
    rep = expansion_report(make_tf("z3"), unit_limit, tgt)
    assert rep.correction == pytest.approx(8.0, abs=1e-12)
    assert rep.se_corr == pytest.approx(0.0, abs=1e-12)
    scaled = math.sqrt(n) * rep.target
    assert abs(scaled - 8) < 3 * math.sqrt(n) * rep.se_t
    zx = expansion_report(make_tf("zx"), unit_limit, tgt)
    assert zx.correction == pytest.approx(0.0, abs=1e-12)
    z1 = expansion_report(make_tf("z"), unit_limit, tgt)
    assert z1.correction == 0 and z1.zeroth == pytest.approx(0, abs=1e-12)


def test_limit_sample_worker_independent():
    fam = make_family("anticipative_endpoint", "sin2")
    a = limit_sample(fam, 600, seed=9, M=64, workers=1)
    b = limit_sample(fam, 600, seed=9, M=64, workers=4)
    assert np.array_equal(a.G, b.G)
    for k in a.terms:
        assert np.array_equal(a.terms[k], b.terms[k])


def test_zeta_route_agrees_with_quadrature():
    fam = make_family("anticipative_endpoint", "sin2")
    lim_q = limit_sample(fam, 4000, seed=5, M=64)
    lim_z = limit_sample(fam, 4000, seed=5, M=64, zeta=True)
    tgt = target_sample(fam, 64, 10, seed=5)
    for name in ("z3", "sinz"):
        q = expansion_report(make_tf(name), lim_q, tgt)
        m = expansion_report(make_tf(name), lim_z, tgt)
        assert abs(q.correction - m.correction) < 4 * m.se_corr + 1e-12


def test_compare_validation():
    fam = make_family("anticipative_endpoint", "sin2")
    with pytest.raises(ValueError):
        compare_distributions(fam, [64], 100)
    with pytest.raises(ValueError):
        compare_distributions(fam, [16, 32, 64], 0)


def test_unknown_test_function():
    with pytest.raises(ValueError, match="catalog"):
        make_tf("cosx")
