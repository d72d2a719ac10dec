import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import special

from domain import DomainError
from specfun import (QuadratureConfig, bessel_I0, bessel_J, bessel_K1, erf, erf_fallback,
                     erfc, erfc_fallback, exp_integral_E, incomplete_bessel_K,
                     incomplete_bessel_K_batch, lambert_w0, lambert_wm1)

A_GRID = [0.05, 0.5, 2.0, 10.0]
B_GRID = [0.01, 0.3, 1.0, 8.0]


def test_erf_fallback_matches_library():
    x = np.concatenate([np.linspace(-6.0, 6.0, 241), [1.999999, 2.0, 2.000001]])
    assert_allclose(erf_fallback(x), special.erf(x), rtol=0, atol=1e-14)
    assert_allclose(erfc_fallback(x), special.erfc(x), rtol=0, atol=1e-14)


def test_erfc_fallback_keeps_relative_accuracy_in_the_tail():
    x = np.array([3.0, 5.0, 10.0, 20.0])
    assert_allclose(erfc_fallback(x), special.erfc(x), rtol=1e-13)


def test_erf_wrappers_are_odd_and_complementary():
    x = np.linspace(-3, 3, 13)
    assert_allclose(erf(-x), -erf(x))
    assert_allclose(erf(x) + erfc(x), 1.0, atol=1e-15)


def test_bessel_domains():
    with pytest.raises(DomainError):
        bessel_J(0, -1.0)
    with pytest.raises(DomainError):
        bessel_J(2, 1.0)
    with pytest.raises(DomainError):
        bessel_K1(0.0)
    with pytest.raises(DomainError):
        bessel_I0(-0.1)
    assert bessel_J(0, 0.0) == pytest.approx(1.0)
    assert bessel_I0(0.0) == pytest.approx(1.0)


def test_exp_integral_E():
    assert exp_integral_E(1, 1.0) == pytest.approx(special.exp1(1.0))
    assert exp_integral_E(3, 2.0) == pytest.approx(special.expn(3, 2.0))
    with pytest.raises(DomainError):
        exp_integral_E(0, 1.0)
    with pytest.raises(DomainError):
        exp_integral_E(1, 0.0)


@pytest.mark.parametrize("a", A_GRID)
@pytest.mark.parametrize("b", B_GRID)
@pytest.mark.parametrize("nu", [0, 1, 2])
def test_incomplete_bessel_recurrence(nu, a, b):
    # a K_{nu-1} - b K_{nu+1} + nu K_nu = e^{-a-b}
    lhs = (a * incomplete_bessel_K(nu - 1, a, b) - b * incomplete_bessel_K(nu + 1, a, b)
           + nu * incomplete_bessel_K(nu, a, b))
    assert lhs == pytest.approx(math.exp(-a - b), rel=1e-10)


@pytest.mark.parametrize("a", A_GRID)
@pytest.mark.parametrize("nu", [0, 1, 3])
def test_incomplete_bessel_reduces_to_exponential_integral(nu, a):
    assert incomplete_bessel_K(nu, a, 0.0) == pytest.approx(float(special.expn(nu + 1, a)),
                                                            rel=1e-10)


@pytest.mark.parametrize("b", B_GRID)
@pytest.mark.parametrize("nu", [1, 2])
def test_incomplete_bessel_at_a_zero_is_lower_gamma(nu, b):
    expected = special.gammainc(nu, b) * special.gamma(nu) / b ** nu
    assert incomplete_bessel_K(nu, 0.0, b) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("a, b", [(0.5, 0.3), (2.0, 1.0), (0.05, 8.0)])
def test_incomplete_bessel_derivative_rules(a, b):
    step = 1e-5
    dK_da = (incomplete_bessel_K(1, a + step, b) - incomplete_bessel_K(1, a - step, b)) / (2 * step)
    dK_db = (incomplete_bessel_K(1, a, b + step) - incomplete_bessel_K(1, a, b - step)) / (2 * step)
    assert dK_da == pytest.approx(-incomplete_bessel_K(0, a, b), rel=1e-6)
    assert dK_db == pytest.approx(-incomplete_bessel_K(2, a, b), rel=1e-6)


def test_incomplete_bessel_domain_errors():
    with pytest.raises(DomainError):
        incomplete_bessel_K(0, -1.0, 1.0)
    with pytest.raises(DomainError):
        incomplete_bessel_K(1, 0.0, 0.0)
    with pytest.raises(DomainError):
        incomplete_bessel_K(0, 0.0, 1.0)
    with pytest.raises(DomainError):
        QuadratureConfig(rtol=0.0)


@pytest.mark.parametrize("a", [0.01, 0.4, 5.0])
def test_batch_matches_adaptive_quadrature(a):
    b = np.array([0.0, 1e-3, 0.2, 3.0, 40.0])
    orders = (-1, 0, 1, 2)
    batch = incomplete_bessel_K_batch(orders, a, b)
    for nu in orders:
        expected = [incomplete_bessel_K(nu, a, bb) for bb in b]
        assert_allclose(batch[nu], expected, rtol=1e-9)


def test_batch_requires_positive_a():
    with pytest.raises(DomainError):
        incomplete_bessel_K_batch((0,), 0.0, [1.0])
    with pytest.raises(DomainError):
        incomplete_bessel_K_batch((0,), 1.0, [-1.0])


def test_lambert_w_round_trip():
    t0 = np.array([-1.0 / math.e + 1e-12, -0.2, 0.0, 0.5, 10.0, 1e6])
    w0 = lambert_w0(t0)
    assert_allclose(w0 * np.exp(w0), t0, rtol=1e-13, atol=1e-13)
    t1 = np.array([-0.3, -1e-3, -1e-12, -1e-30])
    w1 = lambert_wm1(t1)
    assert np.all(w1 <= -1.0)
    assert_allclose(w1 * np.exp(w1), t1, rtol=1e-13)


def test_lambert_w_branch_domains():
    with pytest.raises(DomainError):
        lambert_w0(-1.0)
    with pytest.raises(DomainError):
        lambert_wm1(0.0)


def test_reference_values():
    assert float(erfc(2.0)) == pytest.approx(0.004677734981047266, rel=1e-12)
    assert float(bessel_J(0, 2.404825557695773)) == pytest.approx(0.0, abs=1e-14)
    assert float(bessel_J(1, 0.0)) == 0.0
    assert float(bessel_I0(10.0)) == pytest.approx(2815.716628466254, rel=1e-12)
    assert 1e-6 * float(bessel_K1(1e-6)) == pytest.approx(1.0, abs=1e-5)
    # large-argument form, error O(t^-3/2)
    t = 100.0
    asymptotic = math.sqrt(2.0 / (math.pi * t)) * math.cos(t - 0.25 * math.pi)
    assert float(bessel_J(0, t)) == pytest.approx(asymptotic, abs=1e-3)
