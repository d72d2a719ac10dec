#specfun.py
"""
specfun
Special functions for kernels, windows, oracles and error estimates

Thin, checked wrappers around scipy.special, an internal erf fallback,
the incomplete modified Bessel function K_nu(a, b) and Lambert W.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence

import numpy as np
from scipy import integrate, optimize, special

from domain import DomainError

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)
_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class QuadratureConfig:
    rtol: float = 1e-13
    max_subdivisions: int = 200
    # tail cut where the integrand has fallen below e^-tail_exponent of its peak
    tail_exponent: float = 41.5

    def __post_init__(self):
        if self.rtol <= 0:
            raise DomainError(f"Quadrature tolerance must be positive, got {self.rtol}")
        if self.max_subdivisions < 1:
            raise DomainError("max_subdivisions must be at least 1")


DEFAULT_QUADRATURE = QuadratureConfig()

# ===== ERROR FUNCTION =====


def erf(x):
    return special.erf(x)


def erfc(x):
    return special.erfc(x)


def _erf_series(x: float) -> float:
    # erf(x) = 2/sqrt(pi) e^{-x^2} sum_n 2^n x^{2n+1} / (1*3*...*(2n+1)); all terms positive
    term = x
    total = x
    n = 0
    while abs(term) > 1e-17 * abs(total):
        n += 1
        term *= 2.0 * x * x / (2 * n + 1)
        total += term
    return 2.0 / _SQRT_PI * math.exp(-x * x) * total


def _erfc_continued_fraction(x: float) -> float:
    # erfc(x) = e^{-x^2}/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))), modified Lentz
    tiny = 1e-300
    f = x
    C = x
    D = 0.0
    for n in range(1, 500):
        a = n / 2.0
        D = x + a * D
        D = tiny if D == 0 else D
        C = x + a / C
        C = tiny if C == 0 else C
        D = 1.0 / D
        delta = C * D
        f *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return math.exp(-x * x) / (_SQRT_PI * f)


def erf_fallback(x) -> np.ndarray:
    """erf without scipy: Maclaurin series below 2, continued fraction above"""
    def scalar(v):
        v = float(v)
        if v < 0:
            return -scalar(-v)
        if v < 2.0:
            return _erf_series(v)
        return 1.0 - _erfc_continued_fraction(v)
    return np.vectorize(scalar, otypes=[float])(x)


def erfc_fallback(x) -> np.ndarray:
    def scalar(v):
        v = float(v)
        if v >= 2.0:
            return _erfc_continued_fraction(v)
        if v <= -2.0:
            return 2.0 - _erfc_continued_fraction(-v)
        return 1.0 - (_erf_series(v) if v >= 0 else -_erf_series(-v))
    return np.vectorize(scalar, otypes=[float])(x)


# ===== BESSEL FUNCTIONS =====


def bessel_J(order: int, t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("bessel_J is only defined here for t >= 0")
    if order == 0:
        return special.j0(t)
    if order == 1:
        return special.j1(t)
    raise DomainError(f"bessel_J supports orders 0 and 1, got {order}")


def bessel_I0(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("bessel_I0 is only defined here for t >= 0")
    return special.i0(t)


def bessel_K1(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("bessel_K1 requires t > 0")
    return special.k1(t)


# ===== EXPONENTIAL INTEGRAL AND INCOMPLETE BESSEL =====


def exp_integral_E(order: int, a):
    """E_nu(a) = int_1^inf e^{-a t} t^{-nu} dt"""
    if order < 1 or int(order) != order:
        raise DomainError(f"exp_integral_E needs an integer order >= 1, got {order}")
    a = np.asarray(a, dtype=float)
    if np.any(a <= 0):
        raise DomainError("exp_integral_E requires a > 0")
    if order == 1:
        return special.exp1(a)
    return special.expn(int(order), a)


def _check_incomplete_bessel_args(nu: int, a: float, b: float):
    if a < 0 or b < 0:
        raise DomainError(f"K_nu(a, b) needs a, b >= 0, got a={a}, b={b}")
    if a == 0 and b == 0:
        raise DomainError("K_nu(a, b) diverges for a = b = 0")
    if a == 0 and nu <= 0:
        raise DomainError(f"K_{nu}(0, b) diverges")


def _log_integrand_bounds(nu: float, a: float, b: float, tail: float):
    """Peak location, peak exponent and tail cut of g(s) = a e^s + b e^-s + nu s on s >= 0"""
    g = lambda s: a * math.exp(s) + b * math.exp(-s) + nu * s
    if a > 0 and b > 0:
        # g'(s) = a e^s - b e^-s + nu = 0  ->  quadratic in e^s
        z = (-nu + math.sqrt(nu * nu + 4 * a * b)) / (2 * a)
        s_peak = max(0.0, math.log(z))
    elif a > 0:
        s_peak = 0.0 if nu >= -a else math.log(-nu / a)
    else:
        s_peak = max(0.0, math.log(b / nu)) if nu > 0 else 0.0
    g_peak = g(s_peak)
    s_hi = max(s_peak, 1.0)
    while g(s_hi) - g_peak < tail:
        s_hi = 2.0 * s_hi + 1.0
    s_end = optimize.brentq(lambda s: g(s) - g_peak - tail, s_peak, s_hi, xtol=1e-12)
    return s_peak, g_peak, s_end


def incomplete_bessel_K(nu: int, a: float, b: float,
                        config: QuadratureConfig = DEFAULT_QUADRATURE) -> float:
    """
    K_nu(a, b) = int_1^inf exp(-a t - b/t) t^{-(nu+1)} dt

    Evaluated with t = e^s and adaptive Gauss-Kronrod on the peak-normalised
    integrand, cut where it has decayed by e^-tail_exponent.
    """
    a = float(a)
    b = float(b)
    _check_incomplete_bessel_args(nu, a, b)
    s_peak, g_peak, s_end = _log_integrand_bounds(float(nu), a, b, config.tail_exponent)

    def integrand(s):
        return math.exp(-(a * math.exp(s) + b * math.exp(-s) + nu * s - g_peak))

    points = [s_peak] if 0.0 < s_peak < s_end else None
    value, abserr = integrate.quad(integrand, 0.0, s_end, points=points, epsabs=0.0,
                                   epsrel=config.rtol, limit=config.max_subdivisions)
    if value > 0 and abserr > 1e3 * config.rtol * value:
        logger.warning(f"K_{nu}({a}, {b}) quadrature error estimate {abserr / value:.2e} "
                       f"exceeds the requested tolerance")
    return value * math.exp(-g_peak)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


def incomplete_bessel_K_batch(orders: Sequence[int], a: float, b,
                              max_panel_width: float = 0.25,
                              tail: float = 41.5) -> Dict[int, np.ndarray]:
    """
    Several orders of K_nu(a, b) for one a and many b at once

    Composite 10-point Gauss-Legendre on the log-substituted integral; panel
    width is tied to the peak curvature 2 sqrt(a b) of the exponent. The
    common factor exp(-a e^s - b e^-s) is shared between orders.
    """
    a = float(a)
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a <= 0:
        raise DomainError("incomplete_bessel_K_batch requires a > 0")
    if np.any(b < 0):
        raise DomainError("incomplete_bessel_K_batch requires b >= 0")
    b_max = float(b.max()) if b.size else 0.0
    nu_min = min(orders)
    # where a e^s alone exceeds the worst-case peak exponent by `tail`
    g_worst = a + b_max + 2.0 * math.sqrt(a * b_max) + abs(nu_min) * 40.0
    s_end = max(math.log((g_worst + tail) / a), 1.0)
    width = 1.0 / math.sqrt(2.0 * math.sqrt(a * b_max) + a + 1.0)
    panel_width = min(max_panel_width, 0.5 * width)
    n_panels = int(math.ceil(s_end / panel_width))
    edges = np.linspace(0.0, s_end, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    s = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()

    results = {nu: np.empty_like(b) for nu in orders}
    chunk = max(1, 2 ** 21 // s.size)
    for start in range(0, b.size, chunk):
        bb = b[start:start + chunk, None]
        core = np.exp(-a * np.exp(s)[None, :] - bb * np.exp(-s)[None, :])
        for nu in orders:
            results[nu][start:start + chunk] = core @ (w * np.exp(-nu * s))
    return results


# ===== LAMBERT W =====


def lambert_w0(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < -1.0 / math.e - 1e-15):
        raise DomainError("lambert_w0 requires t >= -1/e")
    return np.real(special.lambertw(np.maximum(t, -1.0 / math.e), 0))


def lambert_wm1(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < -1.0 / math.e - 1e-15) or np.any(t >= 0):
        raise DomainError("lambert_wm1 requires -1/e <= t < 0")
    return np.real(special.lambertw(np.maximum(t, -1.0 / math.e), -1))
