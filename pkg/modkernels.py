#modkernels.py
"""
modkernels
Truncated free-space kernels for reduced periodicity

The scalar harmonic and biharmonic kernels are cut off at radius R in the
free directions so their Fourier transforms stay finite at the periodic
zero mode. Closed forms are used away from the origin; below R*kappa = 1
the power series of the radial truncation integrals take over.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from domain import ConfigurationError, KernelKind, SourceSystem
from kernels import diffop_hat, scalar_kernel_hat
from specfun import bessel_J

logger = logging.getLogger(__name__)

SERIES_THRESHOLD = 1.0
SERIES_TERMS = 16

_D_TENSOR_2P = np.zeros((3, 3, 3))
_D_TENSOR_2P[0, 0, 2] = _D_TENSOR_2P[0, 2, 0] = -2.0
_D_TENSOR_2P[1, 1, 2] = _D_TENSOR_2P[1, 2, 1] = -2.0
_D_TENSOR_2P[2] = -2.0 * np.eye(3)
_D_ROTLET_2P = np.array([[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
_D_STOKESLET_2P = np.diag([2.0, 2.0, 0.0])


@dataclass(frozen=True)
class ModifiedKernelSpec:
    """
    Truncation radius and gauge constants for one kernel and periodicity

    Unset gauge constants take the optimal-decay values:
    a_B = -R/2, b_B = -1/(2R) for D=0 and l_H = R, l_B = R sqrt(e),
    c_B = -R^2/2 for D=1.
    """
    kind: KernelKind
    d: int
    R: float
    a_B: Optional[float] = None
    b_B: Optional[float] = None
    l_H: Optional[float] = None
    l_B: Optional[float] = None
    c_B: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        if self.d not in (0, 1, 2, 3):
            raise ConfigurationError(f"Invalid periodicity {self.d}")
        if self.d < 3 and not self.R > 0:
            raise ConfigurationError(f"Truncation radius must be positive, got {self.R}")
        R = self.R
        defaults = {
            "a_B": -0.5 * R,
            "b_B": -0.5 / R if R else 0.0,
            "l_H": R,
            "l_B": R * math.sqrt(math.e),
            "c_B": -0.5 * R * R,
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)

    @classmethod
    def optimal(cls, kind, d: int, R: float) -> "ModifiedKernelSpec":
        return cls(kind, d, R)

    @classmethod
    def untuned(cls, kind, d: int, R: float) -> "ModifiedKernelSpec":
        """Plain truncation: a_B = b_B = 0 and l_H = l_B = 1, c_B = 0"""
        return cls(kind, d, R, a_B=0.0, b_B=0.0, l_H=1.0, l_B=1.0, c_B=0.0)


def truncation_radius(extended_lengths, d: int) -> float:
    L = np.asarray(extended_lengths, dtype=float)
    if d == 2:
        return float(L[2])
    if d == 1:
        return float(math.hypot(L[1], L[2]))
    if d == 0:
        return float(np.sqrt(np.sum(L ** 2)))
    raise ConfigurationError("No truncation radius is needed for D=3")


# ===== SCALAR TRUNCATED KERNELS =====


def _split(kappa, R):
    kappa = np.abs(np.asarray(kappa, dtype=float))
    small = kappa * R < SERIES_THRESHOLD
    return kappa, small


def _series(kappa: np.ndarray, coefficient) -> np.ndarray:
    total = np.zeros_like(kappa)
    power = np.ones_like(kappa)
    for n in range(SERIES_TERMS):
        total += coefficient(n) * power
        power = power * kappa * kappa
    return total


def harmonic_hat_trunc_0p(kappa, R: float) -> np.ndarray:
    kappa, small = _split(kappa, R)
    out = np.empty_like(kappa)
    k = kappa[~small]
    out[~small] = 4.0 * math.pi / k ** 2 * (1.0 - np.cos(R * k))
    out[small] = _series(kappa[small], lambda n: 4.0 * math.pi * (-1) ** n
                         / math.factorial(2 * n + 1) * R ** (2 * n + 2) / (2 * n + 2))
    return out


def biharmonic_hat_trunc_0p(kappa, R: float, a_B: Optional[float] = None,
                            b_B: Optional[float] = None) -> np.ndarray:
    a = -0.5 * R if a_B is None else a_B
    b = -0.5 / R if b_B is None else b_B
    kappa, small = _split(kappa, R)
    out = np.empty_like(kappa)
    k = kappa[~small]
    x = R * k
    bracket = (1.0 - (1.0 - 0.5 * (a + R + b * R * R) * R * k ** 2 + 3.0 * b * R) * np.cos(x)
               - (0.5 * (a + 2.0 * R + 3.0 * b * R * R) * k ** 2 - 3.0 * b) * np.sin(x) / k)
    out[~small] = -8.0 * math.pi / k ** 4 * bracket
    out[small] = _series(kappa[small], lambda n: 4.0 * math.pi * (-1) ** n
                         / math.factorial(2 * n + 1)
                         * (R ** (2 * n + 4) / (2 * n + 4) + a * R ** (2 * n + 3) / (2 * n + 3)
                            + b * R ** (2 * n + 5) / (2 * n + 5)))
    return out


def harmonic_hat_trunc_1p(kappa, R: float, l_H: Optional[float] = None) -> np.ndarray:
    log_r = math.log(R / (R if l_H is None else l_H))
    kappa, small = _split(kappa, R)
    out = np.empty_like(kappa)
    k = kappa[~small]
    x = R * k
    out[~small] = 4.0 * math.pi / k ** 2 * (1.0 - bessel_J(0, x) - x * log_r * bessel_J(1, x))
    out[small] = _series(kappa[small], lambda n: -4.0 * math.pi * (-1) ** n
                         / (4.0 ** n * math.factorial(n) ** 2)
                         * R ** (2 * n + 2) / (2 * n + 2) * (log_r - 1.0 / (2 * n + 2)))
    return out


def biharmonic_hat_trunc_1p(kappa, R: float, l_B: Optional[float] = None,
                            c_B: Optional[float] = None) -> np.ndarray:
    log_r = math.log(R / (R * math.sqrt(math.e) if l_B is None else l_B))
    c = -0.5 * R * R if c_B is None else c_B
    kappa, small = _split(kappa, R)
    out = np.empty_like(kappa)
    k = kappa[~small]
    x = R * k
    j0 = bessel_J(0, x)
    j1 = bessel_J(1, x)
    bracket = (1.0 - j0 - x * (1.0 + log_r) * j1 + 0.25 * x * x * (1.0 + 2.0 * log_r) * j0
               - 0.25 * R * k ** 3 * (c - R * R * log_r) * j1)
    out[~small] = -8.0 * math.pi / k ** 4 * bracket
    out[small] = _series(kappa[small], lambda n: 2.0 * math.pi * (-1) ** n
                         / (4.0 ** n * math.factorial(n) ** 2)
                         * (c * R ** (2 * n + 2) / (2 * n + 2)
                            - R ** (2 * n + 4) / (2 * n + 4) * (log_r - 1.0 / (2 * n + 4))))
    return out


def Z_hat_trunc_2p(kappa3, R: float) -> np.ndarray:
    """Transform of 2 pi sgn(r3) on |r3| < R; odd in kappa3"""
    kappa3 = np.asarray(kappa3, dtype=float)
    small = np.abs(kappa3) * R < SERIES_THRESHOLD
    out = np.empty(kappa3.shape, dtype=complex)
    k = kappa3[~small]
    out[~small] = -4j * math.pi / k * (1.0 - np.cos(R * k))
    ks = kappa3[small]
    out[small] = -4j * math.pi * ks * _series(ks, lambda n: (-1) ** n * R ** (2 * n + 2)
                                              / math.factorial(2 * n + 2))
    return out


def H2p_hat_trunc(kappa3, R: float) -> np.ndarray:
    """Transform of -2 pi |r3| on |r3| < R"""
    kappa3, small = _split(kappa3, R)
    out = np.empty_like(kappa3)
    k = kappa3[~small]
    x = R * k
    out[~small] = 4.0 * math.pi / k ** 2 * (1.0 - np.cos(x) - x * np.sin(x))
    out[small] = _series(kappa3[small], lambda n: -4.0 * math.pi * (-1) ** n * R ** (2 * n + 2)
                         / (math.factorial(2 * n) * (2 * n + 2)))
    return out


# ===== TENSOR KERNELS =====


def scalar_hat_0p(spec: ModifiedKernelSpec, kappa) -> np.ndarray:
    if spec.kind.is_biharmonic:
        return biharmonic_hat_trunc_0p(kappa, spec.R, spec.a_B, spec.b_B)
    return harmonic_hat_trunc_0p(kappa, spec.R)


def _zero_mode_2p(spec: ModifiedKernelSpec, kappa3: np.ndarray) -> np.ndarray:
    if spec.kind is KernelKind.STOKESLET:
        return H2p_hat_trunc(kappa3, spec.R)[:, None, None] * _D_STOKESLET_2P
    Z = Z_hat_trunc_2p(kappa3, spec.R)
    if spec.kind is KernelKind.ROTLET:
        return Z[:, None, None] * _D_ROTLET_2P
    return Z[:, None, None, None] * _D_TENSOR_2P


def _zero_mode_1p(spec: ModifiedKernelSpec, k: np.ndarray) -> np.ndarray:
    k2, k3 = k[:, 1], k[:, 2]
    kappa = np.hypot(k2, k3)
    H = harmonic_hat_trunc_1p(kappa, spec.R, spec.l_H)
    n = k.shape[0]
    if spec.kind is KernelKind.ROTLET:
        return diffop_hat(KernelKind.ROTLET, k) * H[:, None, None]
    B = biharmonic_hat_trunc_1p(kappa, spec.R, spec.l_B, spec.c_B)
    if spec.kind is KernelKind.STOKESLET:
        out = np.zeros((n, 3, 3), dtype=complex)
        out[:, 0, 0] = 2.0 * H
        out[:, 1, 1] = -k3 ** 2 * B
        out[:, 2, 2] = -k2 ** 2 * B
        out[:, 1, 2] = out[:, 2, 1] = k2 * k3 * B
        return out
    CH = np.zeros((n, 3, 3, 3))
    CH[:, 0, 0, 1] = CH[:, 0, 1, 0] = CH[:, 1, 0, 0] = k2
    CH[:, 0, 0, 2] = CH[:, 0, 2, 0] = CH[:, 2, 0, 0] = k3
    kk = kappa ** 2
    CB = np.zeros((n, 3, 3, 3))
    CB[:, 1, 1, 1] = k2 * (3.0 * kk - 2.0 * k2 ** 2)
    CB[:, 2, 2, 2] = k3 * (3.0 * kk - 2.0 * k3 ** 2)
    v223 = k3 * (kk - 2.0 * k2 ** 2)
    v233 = k2 * (kk - 2.0 * k3 ** 2)
    CB[:, 1, 1, 2] = CB[:, 1, 2, 1] = CB[:, 2, 1, 1] = v223
    CB[:, 1, 2, 2] = CB[:, 2, 1, 2] = CB[:, 2, 2, 1] = v233
    return 2j * CH * H[:, None, None, None] - 1j * CB * B[:, None, None, None]


def modified_kernel_hat(spec: ModifiedKernelSpec, k) -> np.ndarray:
    """
    G_R hat at wavevectors k of shape (..., 3)

    Modes with a nonzero periodic part use the plain K hat A hat; the
    periodic zero mode (every mode when D=0) uses the truncated kernels.
    For D=3 the k=0 mode is zero.
    """
    k = np.asarray(k, dtype=float)
    lead = k.shape[:-1]
    kf = k.reshape(-1, 3)
    tail = (3,) * spec.kind.tensor_rank
    out = np.zeros((kf.shape[0],) + tail, dtype=complex)
    pad = (slice(None),) + (None,) * spec.kind.tensor_rank
    k2 = np.sum(kf * kf, axis=1)

    if spec.d == 0:
        out[:] = diffop_hat(spec.kind, kf) * scalar_hat_0p(spec, np.sqrt(k2))[pad]
        return out.reshape(lead + tail)

    kp2 = np.sum(kf[:, :spec.d] ** 2, axis=1)
    nonzero = kp2 > 0
    if np.any(nonzero):
        kn = kf[nonzero]
        out[nonzero] = diffop_hat(spec.kind, kn) * scalar_kernel_hat(spec.kind, k2[nonzero])[pad]
    zero = ~nonzero
    if spec.d < 3 and np.any(zero):
        kz = kf[zero]
        if spec.d == 2:
            out[zero] = _zero_mode_2p(spec, kz[:, 2])
        else:
            out[zero] = _zero_mode_1p(spec, kz)
    return out.reshape(lead + tail)


def modified_kernel_hat_batched(spec: ModifiedKernelSpec, k, chunk: int = 32768):
    """Yield (slice, G_R hat) over a flat (n, 3) wavevector list in fixed-size chunks"""
    k = np.asarray(k, dtype=float).reshape(-1, 3)
    for start in range(0, k.shape[0], chunk):
        part = slice(start, min(start + chunk, k.shape[0]))
        yield part, modified_kernel_hat(spec, k[part])


def gauge_flow_correction(spec: ModifiedKernelSpec, system: SourceSystem) -> np.ndarray:
    """
    Constant flow added by the computation gauge, to be subtracted

    D=0 stokeslet: 4 b_B sum f. D=1 stokeslet: the offset between the
    computation gauge (l_H, l_B) and the reporting gauge l_B = 1,
    l_H = 1/e, which is (4 log(l_H e), 2 log l_B, 2 log l_B) * sum f / L1.
    """
    if spec.kind is not KernelKind.STOKESLET:
        return np.zeros(3)
    total = system.strengths.sum(axis=0)
    if spec.d == 0:
        return 4.0 * spec.b_B * total
    if spec.d == 1:
        weights = np.array([4.0 * math.log(spec.l_H * math.e),
                            2.0 * math.log(spec.l_B), 2.0 * math.log(spec.l_B)])
        return weights * total / system.cell.L1
    return np.zeros(3)
