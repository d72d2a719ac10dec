#kernels.py
"""
kernels
Stokes kernels and their Ewald split

Bare stokeslet, rotlet and stresslet tensors, the Ewald and Hasimoto
screening functions, real-space and Fourier-space split kernels, self terms
and the triply periodic stresslet zero mode. All functions broadcast over
leading axes: r and k have shape (..., 3), tensors come back as
(..., 3, 3) or (..., 3, 3, 3).
"""

import logging
import math
from enum import Enum

import numpy as np

from domain import KernelKind, SingularityError, SourceSystem, TargetSet
from specfun import erfc

logger = logging.getLogger(__name__)

_SQRT_PI = math.sqrt(math.pi)

DELTA = np.eye(3)
EPSILON = np.zeros((3, 3, 3))
EPSILON[0, 1, 2] = EPSILON[1, 2, 0] = EPSILON[2, 0, 1] = 1.0
EPSILON[0, 2, 1] = EPSILON[2, 1, 0] = EPSILON[1, 0, 2] = -1.0


class ScreeningKind(str, Enum):
    EWALD = "ewald"
    HASIMOTO = "hasimoto"


def screening_for(kind: KernelKind) -> ScreeningKind:
    return ScreeningKind.HASIMOTO if KernelKind.parse(kind).is_biharmonic else ScreeningKind.EWALD


def _norm(r: np.ndarray, name: str) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    rn = np.sqrt(np.sum(r * r, axis=-1))
    if np.any(rn == 0):
        raise SingularityError(f"{name} is singular at the origin")
    return rn


def _sym3(r: np.ndarray) -> np.ndarray:
    """delta_jl r_m + delta_mj r_l + delta_lm r_j"""
    return (np.einsum("jl,...m->...jlm", DELTA, r)
            + np.einsum("mj,...l->...jlm", DELTA, r)
            + np.einsum("lm,...j->...jlm", DELTA, r))


def _outer3(r: np.ndarray) -> np.ndarray:
    return np.einsum("...j,...l,...m->...jlm", r, r, r)


# ===== BARE KERNELS =====


def bare_kernel(kind, r) -> np.ndarray:
    kind = KernelKind.parse(kind)
    r = np.asarray(r, dtype=float)
    rn = _norm(r, f"bare {kind.value}")
    if kind is KernelKind.STOKESLET:
        return (DELTA / rn[..., None, None]
                + np.einsum("...j,...l->...jl", r, r) / rn[..., None, None] ** 3)
    if kind is KernelKind.ROTLET:
        return np.einsum("jlm,...m->...jl", EPSILON, r) / rn[..., None, None] ** 3
    return -6.0 * _outer3(r) / rn[..., None, None, None] ** 5


# ===== SCREENING =====


def screening_hat_k2(skind: ScreeningKind, k2, xi: float) -> np.ndarray:
    """Screening function as a function of |k|^2"""
    t = np.asarray(k2, dtype=float) / (4.0 * xi * xi)
    if ScreeningKind(skind) is ScreeningKind.EWALD:
        return np.exp(-t)
    return (1.0 + t) * np.exp(-t)


def screening_hat(skind: ScreeningKind, k, xi: float) -> np.ndarray:
    k = np.asarray(k, dtype=float)
    return screening_hat_k2(skind, np.sum(k * k, axis=-1), xi)


# ===== REAL-SPACE SPLIT =====


def realspace_kernel(kind, r, xi: float) -> np.ndarray:
    kind = KernelKind.parse(kind)
    r = np.asarray(r, dtype=float)
    rn = _norm(r, f"real-space {kind.value}")
    gauss = np.exp(-(xi * rn) ** 2)
    ec = erfc(xi * rn)
    if kind is KernelKind.STOKESLET:
        common = ec / rn + 2.0 * xi * gauss / _SQRT_PI
        rr = np.einsum("...j,...l->...jl", r, r) / (rn ** 2)[..., None, None]
        return ((DELTA + rr) * common[..., None, None]
                - DELTA * (4.0 * xi * gauss / _SQRT_PI)[..., None, None])
    if kind is KernelKind.ROTLET:
        common = (ec / rn + 2.0 * xi * gauss / _SQRT_PI) / rn ** 2
        return np.einsum("jlm,...m->...jl", EPSILON, r) * common[..., None, None]
    radial = 3.0 * ec / rn + (3.0 + 2.0 * (xi * rn) ** 2) * 2.0 * xi * gauss / _SQRT_PI
    return (-2.0 * _outer3(r) * (radial / rn ** 4)[..., None, None, None]
            + _sym3(r) * (4.0 * xi ** 3 * gauss / _SQRT_PI)[..., None, None, None])


# ===== FOURIER-SPACE SPLIT =====


def diffop_hat(kind, k) -> np.ndarray:
    """Fourier symbol of the differential operator mapping the scalar kernel to G"""
    kind = KernelKind.parse(kind)
    k = np.asarray(k, dtype=float)
    k2 = np.sum(k * k, axis=-1)
    if kind is KernelKind.STOKESLET:
        return (-DELTA * k2[..., None, None] + np.einsum("...j,...l->...jl", k, k)).astype(complex)
    if kind is KernelKind.ROTLET:
        return -1j * np.einsum("jlm,...m->...jl", EPSILON, k)
    return -1j * _sym3(k) * k2[..., None, None, None] + 2j * _outer3(k)


def scalar_kernel_hat(kind, k2) -> np.ndarray:
    """Biharmonic -8 pi/k^4 or harmonic 4 pi/k^2, as a function of |k|^2"""
    k2 = np.asarray(k2, dtype=float)
    if np.any(k2 == 0):
        raise SingularityError("Free-space kernel transform is singular at k = 0")
    if KernelKind.parse(kind).is_biharmonic:
        return -8.0 * math.pi / k2 ** 2
    return 4.0 * math.pi / k2


def fourier_kernel_hat(kind, k, xi: float) -> np.ndarray:
    kind = KernelKind.parse(kind)
    k = np.asarray(k, dtype=float)
    k2 = np.sum(k * k, axis=-1)
    scalar = scalar_kernel_hat(kind, k2) * screening_hat_k2(screening_for(kind), k2, xi)
    op = diffop_hat(kind, k)
    return op * scalar.reshape(scalar.shape + (1,) * (op.ndim - scalar.ndim))


def contract(kind, tensor: np.ndarray, strengths: np.ndarray) -> np.ndarray:
    """Apply a kernel tensor to vector (..., 3) or tensor (..., 3, 3) strengths"""
    if KernelKind.parse(kind) is KernelKind.STRESSLET:
        return np.einsum("...jlm,...lm->...j", tensor, strengths)
    return np.einsum("...jl,...l->...j", tensor, strengths)


# ===== SELF TERM AND ZERO MODE =====


def self_term(kind, xi: float, strengths) -> np.ndarray:
    """Self interaction of the starred sum; only the stokeslet has one"""
    kind = KernelKind.parse(kind)
    strengths = np.asarray(strengths, dtype=float)
    if kind is KernelKind.STOKESLET:
        return -4.0 * xi / _SQRT_PI * strengths
    if kind is KernelKind.STRESSLET and strengths.ndim >= 2 and strengths.shape[-2:] == (3, 3):
        return np.zeros(strengths.shape[:-2] + (3,))
    return np.zeros(strengths.shape[:-1] + (3,))


def stresslet_zero_mode_3p(targets: TargetSet, system: SourceSystem) -> np.ndarray:
    """k = 0 contribution of the triply periodic stresslet, O(N + N_t)"""
    if system.kind is not KernelKind.STRESSLET or system.d != 3:
        return np.zeros((targets.N, 3))
    qn = np.sum(system.strengths * system.normals, axis=1)
    total = qn.sum()
    moment = system.positions.T @ qn
    return -8.0 * math.pi / system.cell.volume * (targets.positions * total - moment)
