import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, special

from domain import ConfigurationError, KernelKind, Periodicity, PrimaryCell, SourceSystem
from kernels import diffop_hat, scalar_kernel_hat
from modkernels import (SERIES_THRESHOLD, ModifiedKernelSpec, H2p_hat_trunc, Z_hat_trunc_2p,
                        biharmonic_hat_trunc_0p, biharmonic_hat_trunc_1p, gauge_flow_correction,
                        harmonic_hat_trunc_0p, harmonic_hat_trunc_1p, modified_kernel_hat,
                        modified_kernel_hat_batched, truncation_radius)

R = 1.7
# both sides of the series threshold
KAPPAS = [0.0, 0.2 / R, 0.9 / R, 1.1 / R, 3.0 / R, 9.5 / R]


def _radial_0p(A, kappa):
    def integrand(r):
        return A(r) * r * r * (np.sinc(kappa * r / math.pi))
    return 4.0 * math.pi * integrate.quad(integrand, 0.0, R, epsabs=0.0, epsrel=1e-13,
                                          limit=200)[0]


def _radial_1p(A, kappa):
    def integrand(rho):
        return A(rho) * rho * special.j0(kappa * rho)
    return 2.0 * math.pi * integrate.quad(integrand, 0.0, R, epsabs=0.0, epsrel=1e-13,
                                          limit=200)[0]


@pytest.mark.parametrize("kappa", KAPPAS)
def test_harmonic_0p_matches_radial_integral(kappa):
    expected = _radial_0p(lambda r: 1.0 / r, kappa)
    assert harmonic_hat_trunc_0p(kappa, R) == pytest.approx(expected, rel=1e-10)


@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("gauge", [(None, None), (0.0, 0.0), (0.3, -0.2)])
def test_biharmonic_0p_matches_radial_integral(kappa, gauge):
    a_B, b_B = gauge
    a = -0.5 * R if a_B is None else a_B
    b = -0.5 / R if b_B is None else b_B
    expected = _radial_0p(lambda r: r + a + b * r * r, kappa)
    value = biharmonic_hat_trunc_0p(kappa, R, a_B, b_B)
    assert value == pytest.approx(expected, rel=1e-9, abs=1e-12 * R ** 4)


@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("l_H", [None, 1.0, 0.4])
def test_harmonic_1p_matches_radial_integral(kappa, l_H):
    ell = R if l_H is None else l_H
    expected = _radial_1p(lambda rho: -2.0 * math.log(rho / ell), kappa)
    value = harmonic_hat_trunc_1p(kappa, R, l_H)
    assert value == pytest.approx(expected, rel=1e-9, abs=1e-12 * R ** 2)


@pytest.mark.parametrize("kappa", KAPPAS)
@pytest.mark.parametrize("gauge", [(None, None), (1.0, 0.0)])
def test_biharmonic_1p_matches_radial_integral(kappa, gauge):
    l_B, c_B = gauge
    ell = R * math.sqrt(math.e) if l_B is None else l_B
    c = -0.5 * R * R if c_B is None else c_B
    expected = _radial_1p(lambda rho: c - rho * rho * math.log(rho / ell), kappa)
    value = biharmonic_hat_trunc_1p(kappa, R, l_B, c_B)
    assert value == pytest.approx(expected, rel=1e-9, abs=1e-12 * R ** 4)


@pytest.mark.parametrize("kappa", [0.1 / R, 0.95 / R, 1.05 / R, 4.0 / R])
def test_2p_line_kernels(kappa):
    Z = integrate.quad(lambda r: 2.0 * math.pi * math.sin(kappa * r), 0.0, R)[0]
    assert Z_hat_trunc_2p(kappa, R) == pytest.approx(-2j * Z, rel=1e-10)
    assert Z_hat_trunc_2p(-kappa, R) == pytest.approx(2j * Z, rel=1e-10)
    H = integrate.quad(lambda r: -2.0 * math.pi * r * math.cos(kappa * r), 0.0, R)[0]
    assert H2p_hat_trunc(kappa, R) == pytest.approx(2.0 * H, rel=1e-10)


def test_closed_form_and_series_agree_at_threshold():
    below = (1.0 - 1e-9) * SERIES_THRESHOLD / R
    above = (1.0 + 1e-9) * SERIES_THRESHOLD / R
    for function in (harmonic_hat_trunc_0p, biharmonic_hat_trunc_0p, harmonic_hat_trunc_1p,
                     biharmonic_hat_trunc_1p, H2p_hat_trunc):
        assert function(below, R) == pytest.approx(function(above, R), rel=1e-8)


def test_optimal_gauge_defaults():
    spec = ModifiedKernelSpec.optimal("stokeslet", 0, 2.0)
    assert spec.a_B == pytest.approx(-1.0)
    assert spec.b_B == pytest.approx(-0.25)
    spec1 = ModifiedKernelSpec.optimal("stokeslet", 1, 2.0)
    assert spec1.l_H == pytest.approx(2.0)
    assert spec1.l_B == pytest.approx(2.0 * math.sqrt(math.e))
    assert spec1.c_B == pytest.approx(-2.0)
    untuned = ModifiedKernelSpec.untuned("stokeslet", 0, 2.0)
    assert (untuned.a_B, untuned.b_B) == (0.0, 0.0)


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        ModifiedKernelSpec("rotlet", 4, 1.0)
    with pytest.raises(ConfigurationError):
        ModifiedKernelSpec("rotlet", 1, 0.0)
    ModifiedKernelSpec("rotlet", 3, 0.0)


def test_truncation_radius():
    L = [2.0, 3.0, 4.0]
    assert truncation_radius(L, 2) == pytest.approx(4.0)
    assert truncation_radius(L, 1) == pytest.approx(5.0)
    assert truncation_radius(L, 0) == pytest.approx(math.sqrt(29.0))
    with pytest.raises(ConfigurationError):
        truncation_radius(L, 3)


@pytest.mark.parametrize("kind", ["stokeslet", "stresslet", "rotlet"])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_nonzero_periodic_modes_use_plain_kernel(kind, d):
    spec = ModifiedKernelSpec.optimal(kind, d, 3.0)
    k = np.array([[2.0, 1.0, -0.5], [-1.0, 0.3, 0.7]])
    expected = diffop_hat(kind, k) * scalar_kernel_hat(kind, np.sum(k * k, axis=1)).reshape(
        (-1,) + (1,) * KernelKind.parse(kind).tensor_rank)
    assert_allclose(modified_kernel_hat(spec, k), expected)


def test_3p_zero_mode_is_zero():
    spec = ModifiedKernelSpec.optimal("stresslet", 3, 0.0)
    assert_allclose(modified_kernel_hat(spec, np.zeros((1, 3))), 0.0)


@pytest.mark.parametrize("kind", ["stokeslet", "stresslet", "rotlet"])
def test_0p_kernel_is_finite_at_origin(kind):
    spec = ModifiedKernelSpec.optimal(kind, 0, 2.0)
    value = modified_kernel_hat(spec, np.zeros((1, 3)))
    assert np.all(np.isfinite(value))


def test_batched_matches_direct():
    spec = ModifiedKernelSpec.optimal("stresslet", 1, 2.0)
    k = np.random.default_rng(1).normal(size=(50, 3))
    k[:10, 0] = 0.0
    direct = modified_kernel_hat(spec, k)
    for part, block in modified_kernel_hat_batched(spec, k, chunk=16):
        assert_allclose(block, direct[part])


def test_gauge_flow_correction():
    cell = PrimaryCell.cube(2.0)
    f = np.array([[1.0, 2.0, 3.0], [0.5, -1.0, 0.0]])
    x = np.array([[0.5, 0.5, 0.5], [1.0, 1.0, 1.0]])
    system0 = SourceSystem("stokeslet", cell, x, f, periodicity=Periodicity(0))
    spec0 = ModifiedKernelSpec.optimal("stokeslet", 0, 4.0)
    assert_allclose(gauge_flow_correction(spec0, system0), 4.0 * (-0.125) * f.sum(axis=0))

    system1 = SourceSystem("stokeslet", cell, x, f, periodicity=Periodicity(1))
    reporting = ModifiedKernelSpec("stokeslet", 1, 4.0, l_H=1.0 / math.e, l_B=1.0)
    assert_allclose(gauge_flow_correction(reporting, system1), 0.0, atol=1e-15)

    rotlet = SourceSystem("rotlet", cell, x, f, periodicity=Periodicity(0))
    assert_allclose(gauge_flow_correction(ModifiedKernelSpec.optimal("rotlet", 0, 4.0), rotlet), 0.0)
