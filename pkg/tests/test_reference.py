import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from domain import (ConfigurationError, DomainError, KernelKind, Periodicity, PrimaryCell,
                    SourceSystem, TargetSet, source_quantity_Q)
from estimates import select_parameters, solve_kinf
from kernels import bare_kernel, fourier_kernel_hat
from realspace import potential_parts
from reference import (IDENTITY_EXPECTED, direct_sum_0p, q1p, q2p, random_system,
                       reference_fourier_part, rel_rms_error, rms_error, sphere_quadrature,
                       stresslet_identity_check)

from conftest import ALL_D, ALL_KINDS

XI = 3.0


def _stacked(k1, k2, k3):
    k1, k2, k3 = np.broadcast_arrays(k1, k2, k3)
    return np.stack([k1, k2, k3], axis=-1).astype(float)


@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("k1, k2", [(2.0 * math.pi, 0.0), (2.0 * math.pi, -4.0 * math.pi)])
def test_q2p_is_the_partial_inverse_transform(kind, k1, k2):
    step = 0.05
    kappa = np.arange(-800, 801) * step
    G = fourier_kernel_hat(kind, _stacked(k1, k2, kappa), XI)
    r3 = np.array([0.0, 0.13, -0.4])
    phase = np.exp(1j * np.outer(r3, kappa))
    expected = step / (2.0 * math.pi) * np.tensordot(phase, G, axes=(1, 0))
    value = q2p(kind, k1, k2, r3, XI)
    assert value.shape == expected.shape
    assert_allclose(value, expected, rtol=0, atol=1e-8 * np.max(np.abs(expected)))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_q1p_is_the_partial_inverse_transform(kind):
    k1 = 2.0 * math.pi
    step = 0.2
    kappa = np.arange(-200, 201) * step
    points = [(0.0, 0.0), (0.1, 0.2), (-0.35, 0.05)]
    expected = 0.0
    for k2 in kappa:
        G = fourier_kernel_hat(kind, _stacked(k1, k2, kappa), XI)
        phase = np.exp(1j * np.array([k2 * r2 + kappa * r3 for r2, r3 in points]))
        expected = expected + np.tensordot(phase, G, axes=(1, 0))
    expected = expected * step * step / (4.0 * math.pi ** 2)
    r2 = np.array([p[0] for p in points])
    r3 = np.array([p[1] for p in points])
    value = q1p(kind, k1, r2, r3, XI)
    assert_allclose(value, expected, rtol=0, atol=1e-8 * np.max(np.abs(expected)))


def test_q1p_needs_a_nonzero_wavenumber():
    with pytest.raises(DomainError):
        q1p("rotlet", 0.0, 0.1, 0.1, XI)


def test_direct_sum_for_two_particles():
    cell = PrimaryCell.cube(1.0)
    x = np.array([[0.2, 0.3, 0.4], [0.7, 0.6, 0.5]])
    f = np.array([[1.0, 0.0, -1.0], [0.5, 2.0, 0.0]])
    system = SourceSystem("stokeslet", cell, x, f, periodicity=Periodicity(0))
    u = direct_sum_0p(system, TargetSet.from_sources(system))
    assert_allclose(u[0], bare_kernel("stokeslet", x[0] - x[1]) @ f[1])
    assert_allclose(u[1], bare_kernel("stokeslet", x[1] - x[0]) @ f[0])
    elsewhere = direct_sum_0p(system, TargetSet([[0.5, 0.5, 0.9]]))
    expected = sum(bare_kernel("stokeslet", np.array([0.5, 0.5, 0.9]) - x[n]) @ f[n]
                   for n in range(2))
    assert_allclose(elsewhere[0], expected)


def test_direct_sum_requires_free_space(make_system):
    system = make_system(KernelKind.ROTLET, 1, n=4)
    with pytest.raises(ConfigurationError):
        direct_sum_0p(system, TargetSet.from_sources(system))


def test_error_metrics():
    u_ref = np.array([[3.0, 0.0, 4.0], [0.0, 0.0, 0.0]])
    u = u_ref + np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    assert rms_error(u, u_ref) == pytest.approx(1.0)
    assert rel_rms_error(u, u_ref) == pytest.approx(1.0 / math.sqrt(12.5))
    with pytest.raises(DomainError):
        rms_error(u, u_ref[:1])
    with pytest.raises(DomainError):
        rms_error(np.zeros((0, 3)), np.zeros((0, 3)))
    with pytest.raises(DomainError):
        rel_rms_error(u, np.zeros_like(u))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_random_system_is_reproducible_and_scaled(kind):
    cell = PrimaryCell(2.0, 2.0, 1.0)
    a = random_system(kind, 50, cell, 2, Q=3.0, seed=11)
    b = random_system(kind, 50, cell, 2, Q=3.0, seed=11)
    c = random_system(kind, 50, cell, 2, Q=3.0, seed=12)
    assert np.array_equal(a.positions, b.positions)
    assert not np.array_equal(a.positions, c.positions)
    assert source_quantity_Q(a) == pytest.approx(3.0)
    assert np.all(a.positions >= 0) and np.all(a.positions < cell.lengths)
    assert (a.normals is not None) == (kind is KernelKind.STRESSLET)


def test_clustered_positions_stay_in_the_corner_boxes():
    cell = PrimaryCell.cube(3.0)
    system = random_system("rotlet", 40, cell, 3, clustered=True)
    low = np.all(system.positions < 1.0, axis=1)
    high = np.all(system.positions >= 2.0, axis=1)
    assert np.all(low | high)
    assert low.sum() == high.sum() == 20


def test_sphere_quadrature():
    center = np.array([0.5, 0.4, 0.6])
    nodes, normals, weights = sphere_quadrature(center, 0.2, 8)
    assert nodes.shape == (8 * 16, 3)
    assert weights.sum() == pytest.approx(4.0 * math.pi * 0.04)
    assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
    assert_allclose(np.linalg.norm(nodes - center, axis=1), 0.2)
    assert_allclose(np.sum(normals * weights[:, None], axis=0), 0.0, atol=1e-14)
    # the surface integral of n n^T is (4 pi R^2 / 3) I
    assert_allclose(np.einsum("n,ni,nj->ij", weights, normals, normals),
                    4.0 * math.pi * 0.04 / 3.0 * np.eye(3), atol=1e-14)
    with pytest.raises(ConfigurationError):
        sphere_quadrature(center, 0.2, 1)


def test_identity_check_validates_its_input():
    assert IDENTITY_EXPECTED == {"interior": 8.0, "surface": 4.0, "exterior": 0.0}
    with pytest.raises(ConfigurationError):
        stresslet_identity_check(3, (0.5, 0.5, 0.5), 0.2, 8, "inside")
    with pytest.raises(ConfigurationError):
        stresslet_identity_check(3, (0.1, 0.5, 0.5), 0.2, 8, "interior")


@pytest.mark.slow
@pytest.mark.parametrize("kind", ALL_KINDS)
@pytest.mark.parametrize("d", [3, 2, 1])
def test_spectral_ewald_fourier_part_matches_oracle(make_system, kind, d):
    system = make_system(kind, d, n=20)
    targets = TargetSet.from_sources(system)
    tau, xi = 1e-6, 10.0
    params, _ = select_parameters(kind, d, system.cell, 1.0, xi, tau)
    parts = potential_parts(system, targets, params)
    k_max = max(solve_kinf(kind, xi, tau / 100.0, 1.0, 1.0).value, 2.0 * math.pi)
    reference = reference_fourier_part(system, targets, xi, k_max)
    assert rms_error(parts.fourier + parts.zero_mode, reference) < 10.0 * tau


@pytest.mark.slow
@pytest.mark.parametrize("d", ALL_D)
@pytest.mark.parametrize("target_class, bound", [("interior", 1e-5), ("exterior", 1e-4)])
def test_stresslet_double_layer_identity(d, target_class, bound):
    residual = stresslet_identity_check(d, (0.5, 0.5, 0.5), 0.25, 16, target_class, tol=1e-8)
    assert residual < bound
