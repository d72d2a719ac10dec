import math

import pytest

from domain import (ConfigurationError, DomainError, InfeasibleToleranceError, KernelKind,
                    PrimaryCell)
from estimates import (NRC_TABLE, UPSAMPLING_FIELDS, XI_TABLE, ToleranceSpec, fourier_trunc_error,
                       pollution_adjust, potential_rms, potential_rms_std, rc_from_nrc,
                       realspace_trunc_error, select_parameters, solve_decaying, solve_kinf,
                       solve_P, solve_rc, window_error, xi_for_cutoff)

from conftest import ALL_KINDS


def _log_form(c, a, b, x):
    return math.log(c) + a * math.log(x) - b * x * x


@pytest.mark.parametrize("a", [-0.5, 0.0, 0.5, 1.5])
def test_solve_decaying_round_trip(a):
    c, b, tau = 2.0, 0.5, 1e-6
    solution = solve_decaying(c, a, b, tau)
    assert solution.feasible
    assert _log_form(c, a, b, solution.value) == pytest.approx(math.log(tau), abs=1e-9)
    if a > 0:
        assert solution.value > math.sqrt(a / (2.0 * b))


@pytest.mark.parametrize("c, a, b, tau", [(1.0, 1.0, 1.0, 1e-300), (1.0, -0.5, 1e-6, 1e-300)])
def test_solve_decaying_far_from_the_lambert_range(c, a, b, tau):
    solution = solve_decaying(c, a, b, tau)
    assert _log_form(c, a, b, solution.value) == pytest.approx(math.log(tau), abs=1e-8)


def test_solve_decaying_infeasible_cases():
    stationary = solve_decaying(1.0, 1.5, 1.0, 10.0)
    assert not stationary.feasible
    assert stationary.value == pytest.approx(math.sqrt(0.75))
    flat = solve_decaying(1.0, 0.0, 1.0, 2.0)
    assert (flat.value, flat.feasible) == (0.0, False)
    with pytest.raises(DomainError):
        solve_decaying(1.0, 0.5, 1.0, 0.0)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_truncation_estimates_invert(kind):
    tau = 1e-7
    k_inf = solve_kinf(kind, 10.0, tau, 1.0, 1.0).value
    r_c = solve_rc(kind, 10.0, tau, 1.0, 1.0).value
    assert fourier_trunc_error(kind, 10.0, k_inf, 1.0, 1.0) == pytest.approx(tau, rel=1e-8)
    assert realspace_trunc_error(kind, 10.0, r_c, 1.0, 1.0) == pytest.approx(tau, rel=1e-8)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_xi_for_cutoff_is_consistent_with_solve_rc(kind):
    solution = xi_for_cutoff(kind, 0.2, 1e-6, 1.0, 1.0)
    assert solution.feasible
    assert realspace_trunc_error(kind, solution.value, 0.2, 1.0, 1.0) == pytest.approx(1e-6, rel=1e-8)
    assert solve_rc(kind, solution.value, 1e-6, 1.0, 1.0).value == pytest.approx(0.2, rel=1e-6)


def test_rc_from_nrc_is_the_ball_radius():
    assert rc_from_nrc(4.0 * math.pi / 3.0, 1, 1.0) == pytest.approx(1.0)
    r_c = rc_from_nrc(400, 20000, 8.0)
    assert 4.0 * math.pi / 3.0 * r_c ** 3 * 20000 / 8.0 == pytest.approx(400)
    with pytest.raises(DomainError):
        rc_from_nrc(0, 10, 1.0)


@pytest.mark.parametrize("kind, expected", [(KernelKind.STOKESLET, 1.98),
                                            (KernelKind.ROTLET, 6.76),
                                            (KernelKind.STRESSLET, 22.8)])
def test_potential_rms_at_unit_cell(kind, expected):
    assert potential_rms(kind, 1.0, 1.0, 10.0) == pytest.approx(expected, rel=1e-2)
    assert potential_rms(kind, 1.0, 4.0, 10.0) == pytest.approx(2.0 * expected, rel=1e-2)
    assert 0 < potential_rms_std(kind, 1.0, 1.0, 10.0) < 0.2 * expected


def test_tolerance_spec():
    with pytest.raises(ConfigurationError):
        ToleranceSpec()
    with pytest.raises(ConfigurationError):
        ToleranceSpec(absolute=1e-6, relative=1e-6)
    with pytest.raises(ConfigurationError):
        ToleranceSpec(absolute=-1.0)
    assert ToleranceSpec(absolute=1e-6).absolute_for(5.0) == 1e-6
    assert ToleranceSpec(relative=1e-3).absolute_for(2.0) == pytest.approx(2e-3)


def test_window_size_is_smallest_even_P():
    U, tau = 2.0, 1e-8
    solution = solve_P(tau, U)
    assert solution.feasible and solution.value % 2 == 0
    assert window_error(solution.value, U) <= tau < window_error(solution.value - 2, U)
    assert solve_P(100.0, 1.0).feasible is False


def test_pollution_adjust():
    assert pollution_adjust(0.11, 8, 0) == pytest.approx((0.1, 10))
    assert pollution_adjust(0.105, 8, 2) == pytest.approx((0.1, 12))


def test_tables_cover_every_kernel():
    for kind in ALL_KINDS:
        for layout in ("uniform", "clustered"):
            assert len(NRC_TABLE[(kind, layout)]) == 4
            assert len(XI_TABLE[(kind, layout)]) == 4


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_select_parameters_in_triply_periodic_cell(unit_cell, kind):
    params, report = select_parameters(kind, 3, unit_cell, 1.0, 10.0, 1e-6)
    M = params.grid_shape[0]
    assert params.grid_shape == (M, M, M) and M % 4 == 0
    assert params.P % 2 == 0 and params.P == report.P_actual
    assert params.h == pytest.approx(1.0 / M) == report.h_actual
    assert params.beta == pytest.approx(2.5 * params.P)
    assert report.all_feasible and report.pollution_adjusted
    values = report.to_dict()
    assert not set(UPSAMPLING_FIELDS) & set(values)
    assert values["kind"] == kind.value


@pytest.mark.parametrize("d", [2, 1, 0])
def test_select_parameters_reports_upsampling(unit_cell, d):
    params, report = select_parameters("rotlet", d, unit_cell, 1.0, 10.0, 1e-6)
    values = report.to_dict()
    assert set(UPSAMPLING_FIELDS) <= set(values)
    assert report.s0 >= report.s0_raw
    assert report.s0 * 10 == pytest.approx(round(report.s0 * 10))
    if d == 0:
        # the precomputed kernel carries the oversampling; the grid is only doubled
        assert report.s0_effective == pytest.approx(2.0)
    else:
        assert report.s0_effective >= report.s0 - 1e-12
    assert params.grid_shape[:d] == (params.grid_shape[0],) * d
    assert all(n % 2 == 0 for n in params.grid_shape)
    assert params.R > 0
    if d in (1, 2):
        assert len(report.s_star) == 3 - d and min(report.s_star) >= 1.0
        assert report.kbar_star >= 0


def test_select_parameters_rejects_incommensurate_periodic_side():
    with pytest.raises(ConfigurationError):
        select_parameters("stokeslet", 2, PrimaryCell(1.0, 0.73, 1.0), 1.0, 10.0, 1e-4)
    with pytest.raises(ConfigurationError):
        select_parameters("stokeslet", 3, PrimaryCell.cube(1.0), 1.0, 10.0, 1e-4, f_M=0)


def test_infeasible_tolerance(unit_cell, caplog):
    with pytest.raises(InfeasibleToleranceError):
        select_parameters("stokeslet", 3, unit_cell, 1.0, 10.0, 1e3, strict=True)
    with caplog.at_level("WARNING"):
        _, report = select_parameters("stokeslet", 3, unit_cell, 1.0, 10.0, 1e3)
    assert not report.all_feasible
    assert "cannot be matched" in caplog.text


def test_saturation_and_window_heuristic(unit_cell):
    _, report = select_parameters("stokeslet", 3, unit_cell, 1.0, 10.0, 1e-17)
    assert report.saturated
    _, pkb = select_parameters("rotlet", 3, unit_cell, 1.0, 10.0, 1e-6)
    _, tg = select_parameters("rotlet", 3, unit_cell, 1.0, 10.0, 1e-6, window="tg")
    assert tg.window_heuristic and not pkb.window_heuristic
    assert tg.P_actual > pkb.P_actual
