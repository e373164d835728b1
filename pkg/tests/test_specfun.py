import math

import numpy as np
import pytest
import scipy.special as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from halftaper.errors import InvalidArgument, UnsupportedOrder
from halftaper.specfun import (bessel_j_threehalves, bessel_k, kolmogorov_sf, regularized_inc_beta,
                               std_normal_cdf, std_normal_quantile)


# ---------------------------------------------------------------- incomplete beta
def test_inc_beta_endpoints():
    assert regularized_inc_beta(0.0, 2.3, 0.7) == 0.0
    assert regularized_inc_beta(1.0, 2.3, 0.7) == 1.0


def test_inc_beta_uniform_case():
    assert regularized_inc_beta(0.5, 1, 1) == pytest.approx(0.5, abs=1e-15)


def test_inc_beta_closed_form_b_half():
    # I_z(1, 1/2) = 1 - sqrt(1 - z); independent check by quadrature of the density
    assert regularized_inc_beta(0.75, 1, 0.5) == pytest.approx(0.5, abs=1e-14)
    num = quad(lambda t: (1 - t) ** -0.5, 0, 0.75)[0] / sp.beta(1, 0.5)
    assert regularized_inc_beta(0.75, 1, 0.5) == pytest.approx(num, abs=1e-10)


@pytest.mark.parametrize("z,a,b", [(-0.1, 1, 1), (1.1, 1, 1), (0.5, 0, 1), (0.5, 1, -2)])
def test_inc_beta_domain(z, a, b):
    with pytest.raises(InvalidArgument):
        regularized_inc_beta(z, a, b)


def test_inc_beta_against_scipy():
    rng = np.random.default_rng(0)
    for _ in range(500):
        z, a, b = rng.random(), rng.uniform(0.05, 20), rng.uniform(0.05, 20)
        assert regularized_inc_beta(z, a, b) == pytest.approx(sp.betainc(a, b, z), abs=1e-12)


def test_inc_beta_monotone_in_z():
    rng = np.random.default_rng(1)
    zs = np.linspace(0, 1, 41)
    for _ in range(1000):
        a, b = rng.uniform(0.1, 10, 2)
        v = [regularized_inc_beta(z, a, b) for z in zs]
        assert np.all(np.diff(v) >= -1e-14)


@settings(max_examples=300, deadline=None)
@given(st.floats(0, 1), st.floats(0.05, 30), st.floats(0.05, 30))
def test_inc_beta_symmetry(z, a, b):
    # use an exactly complementary pair so float rounding of 1 - z does not enter
    w = 1.0 - z
    z = 1.0 - w
    assert regularized_inc_beta(z, a, b) + regularized_inc_beta(w, b, a) == pytest.approx(1.0, abs=1e-10)


# ---------------------------------------------------------------- normal
def test_quantile_examples():
    assert std_normal_quantile(0.5) == pytest.approx(0.0, abs=1e-15)
    assert std_normal_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-9)


def test_quantile_0975_by_bisection_on_integrated_cdf():
    phi = lambda x: 0.5 + quad(lambda t: math.exp(-t * t / 2) / math.sqrt(2 * math.pi), 0, x)[0]
    lo, hi = 0.0, 5.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if phi(mid) < 0.975 else (lo, mid)
    assert std_normal_quantile(0.975) == pytest.approx(lo, abs=1e-9)


def test_quantile_against_ndtri_and_roundtrip():
    for p in np.concatenate([np.linspace(0.001, 0.999, 999), [1e-12, 1e-6, 1 - 1e-6]]):
        x = std_normal_quantile(p)
        assert x == pytest.approx(sp.ndtri(p), abs=1e-9)
        assert std_normal_cdf(x) == pytest.approx(p, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.floats(1e-10, 0.5))
def test_quantile_symmetry(p):
    q = 1.0 - p
    p = 1.0 - q
    assert std_normal_quantile(p) == pytest.approx(-std_normal_quantile(q), abs=1e-9)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.5])
def test_quantile_domain(p):
    with pytest.raises(InvalidArgument):
        std_normal_quantile(p)


# ---------------------------------------------------------------- Bessel J_{3/2}
def test_j32_at_pi():
    assert bessel_j_threehalves(math.pi) == pytest.approx(math.sqrt(2) / math.pi, rel=1e-14)


def test_j32_small_argument():
    for x in (1e-6, 1e-4, 1e-3):
        assert bessel_j_threehalves(x) == pytest.approx(x ** 1.5 * math.sqrt(2 / math.pi) / 3, rel=1e-5)


def test_j32_against_scipy_and_continuity():
    x = np.logspace(-6, 3, 2000)
    v = bessel_j_threehalves(x)
    assert np.all(np.isfinite(v))
    np.testing.assert_allclose(v, sp.jv(1.5, x), rtol=1e-9, atol=1e-14)
    # no jump across the series switch
    a, b = bessel_j_threehalves(np.array([1e-2 * (1 - 1e-9), 1e-2]))
    assert abs(a - b) < 1e-12


def test_j32_domain():
    with pytest.raises(InvalidArgument):
        bessel_j_threehalves(0.0)


# ---------------------------------------------------------------- Bessel K
def test_k_half_closed_form():
    assert bessel_k(0.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2) * math.exp(-1), rel=1e-14)
    assert bessel_k(0.5, 1.0) == pytest.approx(0.461068, abs=1e-6)


def test_k_three_halves_recurrence():
    x = np.linspace(0.1, 20, 50)
    expected = np.sqrt(np.pi / (2 * x)) * np.exp(-x) * (1 + 1 / x)
    np.testing.assert_allclose(bessel_k(1.5, x), expected, rtol=1e-13)


@pytest.mark.parametrize("nu", [0, 0.5, 1, 1.5, 2, 2.5, 3, 4.5])
def test_k_against_scipy(nu):
    x = np.concatenate([np.logspace(-6, 2.5, 400), [1.999999, 2.0, 2.000001]])
    np.testing.assert_allclose(bessel_k(nu, x), sp.kv(nu, x), rtol=1e-12)


@pytest.mark.parametrize("nu", [0.5, 1.5, 2.5])
def test_k_half_integer_integral_representation(nu):
    for x in np.linspace(0.1, 10, 12):
        val = quad(lambda t: math.exp(-x * math.cosh(t)) * math.cosh(nu * t), 0, 40)[0]
        assert bessel_k(nu, x) == pytest.approx(val, rel=1e-6)


def test_k_positive_decreasing():
    x = np.linspace(0.05, 30, 500)
    for nu in (0, 0.5, 1, 2.5):
        v = bessel_k(nu, x)
        assert np.all(v > 0) and np.all(np.diff(v) < 0)


def test_k_negative_order_folds():
    assert bessel_k(-1.5, 2.0) == bessel_k(1.5, 2.0)


def test_k_errors():
    with pytest.raises(UnsupportedOrder):
        bessel_k(0.3, 1.0)
    with pytest.raises(InvalidArgument):
        bessel_k(1, 0.0)


# ---------------------------------------------------------------- Kolmogorov
def test_kolmogorov_endpoints():
    assert kolmogorov_sf(0.0) == 1.0
    assert kolmogorov_sf(5.0) < 1e-12


def test_kolmogorov_at_one_vs_series():
    ref = 2 * math.fsum((-1) ** (k - 1) * math.exp(-2 * k * k) for k in range(1, 101))
    assert kolmogorov_sf(1.0) == pytest.approx(ref, abs=1e-12)


def test_kolmogorov_against_scipy():
    for x in np.linspace(0.01, 4, 400):
        assert kolmogorov_sf(x) == pytest.approx(sp.kolmogorov(x), abs=1e-12)


def test_kolmogorov_domain():
    with pytest.raises(InvalidArgument):
        kolmogorov_sf(-1.0)
