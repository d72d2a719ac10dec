#estimates.py
"""
estimates
Error estimates and automated parameter selection

Closed-form truncation and window error estimates, the Fourier-part
potential magnitude U(L, Q, xi), and select_parameters, which turns a
kernel, periodicity, cell, Q, xi and an absolute rms tolerance into a
complete parameter set plus a report of every intermediate value.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy import optimize

from domain import (ConfigurationError, DomainError, InfeasibleToleranceError, KernelKind,
                    PrimaryCell)
from fourier_engine import UpsamplingPlan, build_grid, make_plan, round_grid_size
from modkernels import truncation_radius
from specfun import erfc, lambert_w0, lambert_wm1
from window import WindowKind

logger = logging.getLogger(__name__)

# C_U mean and standard deviation per kernel
POTENTIAL_CONSTANTS = {
    KernelKind.STOKESLET: (1.8, 0.3),
    KernelKind.STRESSLET: (7.2, 0.7),
    KernelKind.ROTLET: (2.4, 0.2),
}

# KB needs about 40% smaller P than TG for the same error
TG_WINDOW_FACTOR = 0.6
MACHINE_FLOOR = 1e-15

# Expected number of points within r_c, indexed by D = 0, 1, 2, 3
NRC_TABLE = {
    (KernelKind.STOKESLET, "uniform"): (2500, 950, 450, 400),
    (KernelKind.ROTLET, "uniform"): (2500, 950, 450, 400),
    (KernelKind.STRESSLET, "uniform"): (6000, 1600, 800, 800),
    (KernelKind.STOKESLET, "clustered"): (800, 300, 170, 120),
    (KernelKind.ROTLET, "clustered"): (800, 300, 170, 120),
    (KernelKind.STRESSLET, "clustered"): (3000, 1200, 370, 300),
}

# Report fields that only exist once there is a free direction
UPSAMPLING_FIELDS = ("s0_raw", "s0", "s0_effective", "s_star", "kbar_star")

# Benchmark decomposition parameter xi, indexed by D = 0, 1, 2, 3
XI_TABLE = {
    (KernelKind.STOKESLET, "uniform"): (23.5579, 32.3804, 41.3955, 43.0296),
    (KernelKind.STRESSLET, "uniform"): (19.9813, 31.1944, 39.4021, 39.4021),
    (KernelKind.ROTLET, "uniform"): (24.5091, 33.9754, 43.7207, 45.4936),
    (KernelKind.STOKESLET, "clustered"): (34.2623, 47.2969, 57.0041, 63.9175),
    (KernelKind.STRESSLET, "clustered"): (25.2392, 34.3700, 51.0933, 54.8344),
    (KernelKind.ROTLET, "clustered"): (36.0043, 50.1320, 60.7237, 68.2974),
}


@dataclass(frozen=True)
class EstimateSolution:
    value: float
    feasible: bool = True


@dataclass(frozen=True)
class ToleranceSpec:
    """Absolute rms tolerance, or a relative one converted with U"""
    absolute: Optional[float] = None
    relative: Optional[float] = None

    def __post_init__(self):
        if (self.absolute is None) == (self.relative is None):
            raise ConfigurationError("Give exactly one of an absolute or a relative tolerance")
        value = self.absolute if self.absolute is not None else self.relative
        if not value > 0:
            raise ConfigurationError(f"Tolerance must be positive, got {value}")

    def absolute_for(self, U: float) -> float:
        return self.absolute if self.absolute is not None else U * self.relative


# ===== ESTIMATE FORMS c x^a exp(-b x^2) =====


def _fourier_form(kind: KernelKind, xi: float, L: float, Q: float) -> Tuple[float, float, float]:
    b = 1.0 / (4.0 * xi * xi)
    if kind is KernelKind.STOKESLET:
        return 4.0 / (math.pi * L) * math.sqrt(Q / 3.0), 0.0, b
    if kind is KernelKind.ROTLET:
        return math.sqrt(8.0 * xi * xi * Q / (3.0 * math.pi * L ** 3)), -0.5, b
    return 4.0 / (3.0 * math.pi * L) * math.sqrt(3.5 * Q), 1.0, b


def _real_form(kind: KernelKind, xi: float, L: float, Q: float) -> Tuple[float, float, float]:
    b = xi * xi
    if kind is KernelKind.STOKESLET:
        return math.sqrt(4.0 * Q / L ** 3), 0.5, b
    if kind is KernelKind.ROTLET:
        return math.sqrt(8.0 * Q / (3.0 * L ** 3)), -0.5, b
    return math.sqrt(112.0 * Q * xi ** 4 / (9.0 * L ** 3)), 1.5, b


def _check_positive(**values):
    for name, value in values.items():
        if not value > 0:
            raise DomainError(f"{name} must be positive, got {value}")


def solve_decaying(c: float, a: float, b: float, tau: float) -> EstimateSolution:
    """
    Largest x with c x^a exp(-b x^2) = tau

    a > 0 uses the W_-1 branch and is infeasible when tau exceeds the
    maximum, in which case the stationary point is returned. a < 0 uses
    W_0, a = 0 a logarithm.
    """
    _check_positive(c=c, b=b, tau=tau)
    if a == 0:
        if tau >= c:
            return EstimateSolution(0.0, False)
        return EstimateSolution(math.sqrt(math.log(c / tau) / b))
    # x^2 exp(-2 b x^2 / a) = (tau/c)^(2/a); y = -2 b x^2 / a solves y e^y = t
    log_t = math.log(2.0 * b / abs(a)) + (2.0 / a) * math.log(tau / c)
    if a > 0:
        if log_t > -1.0:
            return EstimateSolution(math.sqrt(a / (2.0 * b)), False)
        if log_t < -700.0:
            # W_-1(-e^L) solves y + log(-y) = L
            y = log_t - math.log(-log_t)
            for _ in range(50):
                y = y - (y + math.log(-y) - log_t) / (1.0 + 1.0 / y)
        else:
            y = float(lambert_wm1(-math.exp(log_t)))
    else:
        if log_t > 700.0:
            # W0(t) ~ log t - log log t for huge t
            y = log_t - math.log(log_t)
            for _ in range(50):
                y = y - (y + math.log(y) - log_t) / (1.0 + 1.0 / y)
        else:
            y = float(lambert_w0(math.exp(log_t)))
    return EstimateSolution(math.sqrt(-y * a / (2.0 * b)))


def fourier_trunc_error(kind, xi: float, k_inf: float, L: float, Q: float) -> float:
    kind = KernelKind.parse(kind)
    _check_positive(xi=xi, k_inf=k_inf, L=L)
    c, a, b = _fourier_form(kind, xi, L, Q)
    return c * k_inf ** a * math.exp(-b * k_inf ** 2)


def realspace_trunc_error(kind, xi: float, r_c: float, L: float, Q: float) -> float:
    kind = KernelKind.parse(kind)
    _check_positive(xi=xi, r_c=r_c, L=L)
    c, a, b = _real_form(kind, xi, L, Q)
    return c * r_c ** a * math.exp(-b * r_c ** 2)


def solve_kinf(kind, xi: float, tau: float, L: float, Q: float) -> EstimateSolution:
    kind = KernelKind.parse(kind)
    _check_positive(xi=xi, L=L, Q=Q)
    return solve_decaying(*_fourier_form(kind, xi, L, Q), tau)


def solve_rc(kind, xi: float, tau: float, L: float, Q: float) -> EstimateSolution:
    kind = KernelKind.parse(kind)
    _check_positive(xi=xi, L=L, Q=Q)
    return solve_decaying(*_real_form(kind, xi, L, Q), tau)


# ===== POTENTIAL MAGNITUDE AND WINDOW ERROR =====


def _f_U(kind: KernelKind, t: float) -> float:
    if kind is KernelKind.STOKESLET:
        return (1.0 + 1.323e-2 * t + 2.469e-4 * t * t) * math.exp(-5.205 / (t * t))
    if kind is KernelKind.STRESSLET:
        return math.sqrt(t)
    return math.sqrt(t) * math.exp(-11.60 / (t * t))


def potential_rms(kind, L: float, Q: float, xi: float) -> float:
    kind = KernelKind.parse(kind)
    _check_positive(L=L, xi=xi)
    C_U = POTENTIAL_CONSTANTS[kind][0]
    power = 1 if kind is KernelKind.STOKESLET else 2
    return C_U * math.sqrt(Q) * _f_U(kind, xi * L) / L ** power


def potential_rms_std(kind, L: float, Q: float, xi: float) -> float:
    """Spread of U implied by the standard deviation of C_U"""
    kind = KernelKind.parse(kind)
    mean, std = POTENTIAL_CONSTANTS[kind]
    return potential_rms(kind, L, Q, xi) * std / mean


def window_error(P: float, U: float) -> float:
    return 10.0 * U * math.exp(-2.5 * P)


def window_error_full(P: float, beta: float, U: float) -> float:
    return 5.0 * U * (math.exp(-2.0 * math.pi * P * P / beta) + float(erfc(math.sqrt(beta))))


def window_size_continuous(tau: float, U: float) -> EstimateSolution:
    _check_positive(tau=tau, U=U)
    if tau >= 10.0 * U:
        return EstimateSolution(0.0, False)
    return EstimateSolution(math.log(10.0 * U / tau) / 2.5)


def solve_P(tau: float, U: float) -> EstimateSolution:
    """Smallest even P with 10 U exp(-2.5 P) <= tau"""
    continuous = window_size_continuous(tau, U)
    if not continuous.feasible:
        return EstimateSolution(2, False)
    return EstimateSolution(max(2, 2 * math.ceil(continuous.value / 2.0 - 1e-12)))


def pollution_adjust(h: float, P: float, d: int) -> Tuple[float, float]:
    if d == 0:
        return h / 1.1, P + 2
    return h / 1.05, P + 4


def rc_from_nrc(nrc: float, N: int, volume: float) -> float:
    _check_positive(nrc=nrc, N=N, volume=volume)
    return (3.0 * nrc * volume / (4.0 * math.pi * N)) ** (1.0 / 3.0)


def xi_for_cutoff(kind, r_c: float, tau: float, L: float, Q: float) -> EstimateSolution:
    """xi at which the real-space estimate for cut-off r_c equals tau"""
    kind = KernelKind.parse(kind)
    _check_positive(r_c=r_c, tau=tau, L=L, Q=Q)
    lo = 1.0 / r_c if kind is KernelKind.STRESSLET else 1e-6 / r_c
    g = lambda xi: math.log(realspace_trunc_error(kind, xi, r_c, L, Q)) - math.log(tau)
    if g(lo) <= 0:
        return EstimateSolution(lo, False)
    hi = 2.0 * lo + 1.0 / r_c
    while g(hi) > 0:
        hi *= 2.0
    return EstimateSolution(optimize.brentq(g, lo, hi, xtol=1e-14 / r_c, rtol=1e-13))


# ===== UPSAMPLING =====


def upsampling_params(grid, tau: float, U: float, d: int, f_M: int,
                      precompute: bool = False) -> Tuple[UpsamplingPlan, float]:
    """Plan with s0, s* and kbar*; also returns s0 before rounding to one decimal"""
    if d == 3:
        return UpsamplingPlan(), 1.0
    L_ext = grid.extended_lengths
    R = truncation_radius(L_ext, d)
    s0_raw = 1.0 + R / min(L_ext[i] for i in grid.free_axes)
    s0 = math.ceil(10.0 * s0_raw - 1e-9) / 10.0
    s_star = ()
    kbar = 0
    if d in (1, 2):
        log_term = math.log(U / (2.0 * tau)) / (2.0 * math.pi)
        stars = []
        for i in grid.free_axes:
            M = grid.M[i]
            M_ext = grid.shape[i]
            if M_ext <= M:
                raise ConfigurationError(f"No padding on free axis {i + 1}; kbar* is undefined")
            stars.append(max(1.0, (M / M_ext) * (1.0 + log_term)))
            kbar = max(kbar, max(0, math.ceil(M / (M_ext - M) * log_term - 1.0 - 1e-12)))
        s_star = tuple(stars)
    return make_plan(grid, s0, s_star, kbar, f_M, precompute), s0_raw


# ===== PARAMETER SELECTION =====


@dataclass(frozen=True)
class EwaldParams:
    """Complete parameter set for one kernel, periodicity and cell"""
    kind: str
    d: int
    xi: float
    r_c: float
    h: float
    P: int
    beta: float
    nu: int
    alpha: float
    window: str
    f_M: int
    grid_shape: Tuple[int, int, int]
    delta_L: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    R: float = 0.0
    s0: float = 1.0
    s_star: Tuple[float, ...] = ()
    kbar_star: int = 0
    precompute_0p: bool = False

    @property
    def k_inf(self) -> float:
        return math.pi / self.h


@dataclass
class EstimateReport:
    kind: str
    d: int
    tau: float
    xi: float
    L: float
    Q: float
    U: float
    U_std: float
    k_inf_estimate: float
    h_estimate: float
    P_estimate: float
    h_target: float
    P_target: float
    h_actual: float
    P_actual: int
    r_c: float
    E_fourier_trunc: float
    E_real_trunc: float
    E_window: float
    E_window_full: float
    pollution_adjusted: bool
    window_heuristic: bool
    feasible: Dict[str, bool] = field(default_factory=dict)
    grid_shape: Tuple[int, ...] = ()
    s0_raw: Optional[float] = None
    s0: Optional[float] = None
    s0_effective: Optional[float] = None
    s_star: Tuple[float, ...] = ()
    kbar_star: Optional[int] = None
    saturated: bool = False

    @property
    def all_feasible(self) -> bool:
        return all(self.feasible.values())

    def to_dict(self) -> dict:
        values = asdict(self)
        if self.d == 3:
            for key in UPSAMPLING_FIELDS:
                values.pop(key)
        return values


def build_params(kind, d: int, cell: PrimaryCell, xi: float, r_c: float, h: float, P: int,
                 tau: float, U: float, f_M: int = 4, window="pkb", precompute_0p: bool = True
                 ) -> Tuple[EwaldParams, UpsamplingPlan, Optional[float]]:
    """Parameter set for a fixed h and P; the extended grid and upsampling follow from tau"""
    kind = KernelKind.parse(kind)
    window = WindowKind.parse(window)
    P = int(P)
    beta = 2.5 * P
    nu = min(P // 2 + 2, 10)
    alpha = 0.91 * 0.5 * math.pi * P
    if d == 3:
        shape = tuple(int(round(L / h)) for L in cell.lengths)
        params = EwaldParams(kind.value, d, xi, r_c, h, P, beta, nu, alpha, window.value, f_M,
                             shape)
        return params, UpsamplingPlan(), None
    grid = build_grid(cell, d, h, P, kind, f_M)
    plan, s0_raw = upsampling_params(grid, tau, U, d, f_M, precompute_0p)
    R = truncation_radius(grid.extended_lengths, d)
    params = EwaldParams(kind.value, d, xi, r_c, h, P, beta, nu, alpha, window.value, f_M,
                         grid.shape, tuple(float(v) for v in grid.padding), R, plan.s0,
                         plan.s_star, plan.kbar_star, plan.precompute)
    return params, plan, s0_raw


def select_parameters(kind, d: int, cell: PrimaryCell, Q: float, xi: float, tau: float,
                      f_M: int = 4, window="pkb", pollution: bool = True,
                      precompute_0p: bool = True, strict: bool = False
                      ) -> Tuple[EwaldParams, EstimateReport]:
    """
    Steps: r_c, preliminary h and P, pollution adjustment, grid rounding,
    even P with beta and nu, then for D < 3 the extended grid and the
    upsampling parameters.
    """
    kind = KernelKind.parse(kind)
    window = WindowKind.parse(window)
    _check_positive(xi=xi, tau=tau, Q=Q)
    if f_M < 1:
        raise ConfigurationError(f"f_M must be at least 1, got {f_M}")
    L = cell.volume ** (1.0 / 3.0)

    rc = solve_rc(kind, xi, tau, L, Q)
    kinf = solve_kinf(kind, xi, tau, L, Q)
    U = potential_rms(kind, L, Q, xi)
    P_cont = window_size_continuous(tau, U)
    feasible = {"real": rc.feasible, "fourier": kinf.feasible, "window": P_cont.feasible}
    saturated = tau < MACHINE_FLOOR * U
    if saturated:
        logger.warning(f"Tolerance {tau:.2e} is below the round-off floor for U={U:.3g}; "
                       f"errors will saturate")

    k_inf = max(kinf.value, 2.0 * math.pi / L)
    h_estimate = math.pi / k_inf
    P_estimate = P_cont.value
    heuristic = window is WindowKind.TG
    if heuristic:
        P_estimate /= TG_WINDOW_FACTOR
    if pollution:
        h_target, P_target = pollution_adjust(h_estimate, P_estimate, d)
    else:
        h_target, P_target = h_estimate, P_estimate

    L_axes = cell.lengths
    M0 = max(round_grid_size(L_axes[0] / h_target, f_M), 2)
    h = L_axes[0] / M0
    for i in range(1, d):
        M_i = L_axes[i] / h
        if abs(M_i - round(M_i)) > 1e-9 * M_i or round(M_i) % 2:
            raise ConfigurationError(f"Periodic side L{i + 1}={L_axes[i]} is not an even "
                                     f"multiple of h={h:.6g}")
    P = max(2, 2 * math.ceil(P_target / 2.0 - 1e-12))
    beta = 2.5 * P
    r_c = rc.value if rc.value > 0 else L

    report = EstimateReport(
        kind=kind.value, d=d, tau=tau, xi=xi, L=L, Q=Q, U=U,
        U_std=potential_rms_std(kind, L, Q, xi),
        k_inf_estimate=kinf.value, h_estimate=h_estimate, P_estimate=P_estimate,
        h_target=h_target, P_target=P_target, h_actual=h, P_actual=P, r_c=r_c,
        E_fourier_trunc=fourier_trunc_error(kind, xi, math.pi / h, L, Q),
        E_real_trunc=realspace_trunc_error(kind, xi, r_c, L, Q),
        E_window=window_error(P, U), E_window_full=window_error_full(P, beta, U),
        pollution_adjusted=pollution, window_heuristic=heuristic, feasible=feasible,
        saturated=saturated)

    params, plan, s0_raw = build_params(kind, d, cell, xi, r_c, h, P, tau, U, f_M, window,
                                        precompute_0p)
    if d < 3:
        report.s0_raw = s0_raw
        report.s0 = plan.s0
        report.s0_effective = plan.zero_sizes[0] / params.grid_shape[d]
        report.s_star = plan.s_star
        report.kbar_star = plan.kbar_star
    report.grid_shape = tuple(params.grid_shape)

    logger.info(f"Selected parameters for {kind.value} D={d}: xi={xi}, r_c={r_c:.6g}, "
                f"h={h:.6g}, P={P}, grid={params.grid_shape}")
    if not report.all_feasible:
        failed = [name for name, ok in feasible.items() if not ok]
        message = f"Tolerance {tau:.3g} cannot be matched by the {', '.join(failed)} estimate(s)"
        if strict:
            raise InfeasibleToleranceError(message)
        logger.warning(message)
    return params, report
