#reference.py
"""
reference
Slow, independently derived oracles used to validate the fast method

- direct_sum_0p: plain bare-kernel sum for free-space systems
- direct_ewald_fourier_3p: truncated triple Fourier sum for D=3
- q2p / q1p: analytical partial Fourier integrals for D=2 and D=1,
  summed over a truncated wavenumber box by fourier_reference_potential
- rms errors, random particle systems and the stresslet identity check

The q-tensors are assembled from the scalar harmonic or biharmonic
integral and its derivatives in the free directions, applying the same
differential operators that map the scalar kernels to the stokeslet,
rotlet and stresslet.
"""

import logging
import math
import time
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import special

from domain import (ConfigurationError, DomainError, KernelKind, Periodicity, PrimaryCell,
                    SourceSystem, TargetSet, source_quantity_Q)
from estimates import select_parameters
from kernels import bare_kernel, contract
from realspace import full_potential
from specfun import EULER_GAMMA, incomplete_bessel_K_batch

logger = logging.getLogger(__name__)

ORACLE_MAX_SOURCES = 5000
PAIR_CHUNK = 2 ** 16
MODE_CHUNK = 2048

_SQRT_PI = math.sqrt(math.pi)
_I3 = np.eye(3)
_LEVI = np.zeros((3, 3, 3))
_LEVI[0, 1, 2] = _LEVI[1, 2, 0] = _LEVI[2, 0, 1] = 1.0
_LEVI[0, 2, 1] = _LEVI[2, 1, 0] = _LEVI[1, 0, 2] = -1.0


def _check_oracle_size(system: SourceSystem, targets: TargetSet):
    if system.N > ORACLE_MAX_SOURCES or targets.N > ORACLE_MAX_SOURCES:
        raise ConfigurationError(f"Oracle limited to {ORACLE_MAX_SOURCES} sources and targets, "
                                 f"got N={system.N}, targets={targets.N}")


# ===== DIRECT SUMS =====


def direct_sum_0p(system: SourceSystem, targets: TargetSet,
                  starred: Optional[bool] = None) -> np.ndarray:
    """u(x_m) = sum_n G(x_m - x_n) f_n over all sources, skipping n = m when starred"""
    if system.d != 0:
        raise ConfigurationError(f"direct_sum_0p needs D=0, got D={system.d}")
    if starred is None:
        starred = targets.coincides_with_sources
    if starred:
        targets.check_against(system)

    f = system.source_tensor()
    out = np.zeros((targets.N, 3))
    rows = max(1, PAIR_CHUNK // system.N)
    for start in range(0, targets.N, rows):
        stop = min(start + rows, targets.N)
        r = targets.positions[start:stop, None, :] - system.positions[None, :, :]
        keep = np.ones(r.shape[:2], dtype=bool)
        if starred:
            local = np.arange(start, stop)
            keep[local - start, local] = False
            r[~keep] = 1.0
        values = contract(system.kind, bare_kernel(system.kind, r), f[None, ...])
        out[start:stop] = np.sum(values * keep[..., None], axis=1)
    return out


def _wavenumbers(L: float, k_max: float) -> np.ndarray:
    n = int(math.floor(k_max * L / (2.0 * math.pi) + 1e-12))
    return 2.0 * math.pi * np.arange(-n, n + 1) / L


def _fourier_tensor_3p(kind: KernelKind, k: np.ndarray, xi: float) -> np.ndarray:
    """Screened kernel transforms written out per kernel, (n, 3, 3[, 3]) complex"""
    k2 = np.sum(k * k, axis=1)
    t = k2 / (4.0 * xi * xi)
    if kind is KernelKind.ROTLET:
        scalar = 4.0 * math.pi * np.exp(-t) / k2
        return -1j * np.einsum("jlm,nm->njl", _LEVI, k) * scalar[:, None, None]
    scalar = 8.0 * math.pi * (1.0 + t) * np.exp(-t) / (k2 * k2)
    if kind is KernelKind.STOKESLET:
        tensor = _I3 * k2[:, None, None] - np.einsum("nj,nl->njl", k, k)
        return tensor * scalar[:, None, None]
    sym = (np.einsum("jl,nm->njlm", _I3, k) + np.einsum("mj,nl->njlm", _I3, k)
           + np.einsum("lm,nj->njlm", _I3, k))
    tensor = sym * k2[:, None, None, None] - 2.0 * np.einsum("nj,nl,nm->njlm", k, k, k)
    return 1j * tensor * scalar[:, None, None, None]


def direct_ewald_fourier_3p(system: SourceSystem, targets: TargetSet, xi: float,
                            k_inf: float) -> np.ndarray:
    """
    (1/V) sum_{k != 0} G^F(k) f_n e^{ik.(x - x_n)} over the cube |k_i| <= k_inf,
    plus the stresslet k = 0 term
    """
    if system.d != 3:
        raise ConfigurationError(f"direct_ewald_fourier_3p needs D=3, got D={system.d}")
    _check_oracle_size(system, targets)
    started = time.perf_counter()
    L = system.cell.lengths
    axes = [_wavenumbers(L[i], k_inf) for i in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    grid = grid[np.any(grid != 0.0, axis=1)]

    f = system.source_tensor()
    out = np.zeros((targets.N, 3))
    for start in range(0, grid.shape[0], MODE_CHUNK):
        k = grid[start:start + MODE_CHUNK]
        # structure factor S(k) = sum_n f_n e^{-ik.x_n}
        phase_src = np.exp(-1j * (k @ system.positions.T))
        S = np.tensordot(phase_src, f, axes=(1, 0))
        G = _fourier_tensor_3p(system.kind, k, xi)
        if system.kind is KernelKind.STRESSLET:
            GS = np.einsum("njlm,nlm->nj", G, S)
        else:
            GS = np.einsum("njl,nl->nj", G, S)
        out += np.real(np.exp(1j * (targets.positions @ k.T)) @ GS)
    out /= system.cell.volume

    if system.kind is KernelKind.STRESSLET:
        qn = np.einsum("nl,nl->n", system.strengths, system.normals)
        r = targets.positions[:, None, :] - system.positions[None, :, :]
        out -= 8.0 * math.pi / system.cell.volume * np.einsum("tnj,n->tj", r, qn)
    logger.debug(f"Direct 3P Fourier sum over {grid.shape[0]} modes "
                 f"in {time.perf_counter() - started:.2f}s")
    return out


# ===== OPERATOR ASSEMBLY =====


def _assemble(kind: KernelKind, derivative) -> np.ndarray:
    """
    Build the kernel tensor from a scalar and its partial derivatives

    derivative(counts) returns d1^a d2^b d3^c of the scalar for
    counts = (a, b, c), with periodic derivatives already replaced by i k.
    """
    def d(*axes):
        counts = [0, 0, 0]
        for axis in axes:
            counts[axis] += 1
        return derivative(tuple(counts))

    def laplace(*axes):
        return sum(d(*axes, i, i) for i in range(3))

    if kind is KernelKind.ROTLET:
        first = [d(m) for m in range(3)]
        out = np.zeros(first[0].shape + (3, 3), dtype=complex)
        for j in range(3):
            for l in range(3):
                out[..., j, l] = -sum(_LEVI[j, l, m] * first[m] for m in range(3))
        return out
    if kind is KernelKind.STOKESLET:
        lap = laplace()
        out = np.zeros(lap.shape + (3, 3), dtype=complex)
        for j in range(3):
            for l in range(j, 3):
                value = (lap if j == l else 0.0) - d(j, l)
                out[..., j, l] = value
                out[..., l, j] = value
        return out
    grad_lap = [laplace(m) for m in range(3)]
    out = np.zeros(grad_lap[0].shape + (3, 3, 3), dtype=complex)
    for j in range(3):
        for l in range(3):
            for m in range(3):
                out[..., j, l, m] = (_I3[j, l] * grad_lap[m] + _I3[m, j] * grad_lap[l]
                                     + _I3[l, m] * grad_lap[j] - 2.0 * d(j, l, m))
    return out


# ===== DOUBLY PERIODIC INTEGRALS =====


@dataclass
class Aux2P:
    """Auxiliary quantities of the D=2 integrals at one (k1, k2) and many r3"""
    alpha: float
    kt1: float
    kt2: float
    r3: np.ndarray
    xi: float
    theta_p: np.ndarray
    theta_m: np.ndarray
    lam: np.ndarray

    @property
    def beta_p(self) -> np.ndarray:
        return self.theta_p + self.theta_m

    @property
    def beta_m(self) -> np.ndarray:
        return self.theta_p - self.theta_m

    @property
    def Lambda(self) -> np.ndarray:
        return self.lam + self.beta_p / self.alpha - self.r3 * self.beta_m

    @property
    def Psi(self) -> np.ndarray:
        return -self.beta_p / self.alpha - self.r3 * self.beta_m


def aux_2p(k1: float, k2: float, r3, xi: float) -> Aux2P:
    alpha = math.hypot(k1, k2)
    if alpha == 0:
        raise DomainError("The D=2 integral needs (k1, k2) != (0, 0); use q2p_zero")
    r3 = np.asarray(r3, dtype=float)
    gauss = np.exp(-alpha * alpha / (4.0 * xi * xi) - (xi * r3) ** 2)

    def theta(sign):
        # e^{+-alpha r3} erfc(alpha/2xi +- xi r3), scaled through erfcx where it would overflow
        z = alpha / (2.0 * xi) + sign * xi * r3
        scaled = special.erfcx(np.maximum(z, 0.0)) * gauss
        exponent = np.where(z < 0, sign * alpha * r3, 0.0)
        plain = np.exp(exponent) * special.erfc(np.minimum(z, 0.0))
        return np.where(z >= 0, scaled, plain)

    return Aux2P(alpha=alpha, kt1=k1 / alpha, kt2=k2 / alpha, r3=r3, xi=xi,
                 theta_p=theta(1.0), theta_m=theta(-1.0),
                 lam=2.0 / (_SQRT_PI * xi) * gauss)


def _derivatives_2p(kind: KernelKind, aux: Aux2P) -> Dict[int, np.ndarray]:
    """d^n/dr3^n of the scalar integral Q^B (stokeslet, stresslet) or Q^H (rotlet)"""
    a, r3, xi = aux.alpha, aux.r3, aux.xi
    bp, bm = aux.beta_p, aux.beta_m
    if kind is KernelKind.ROTLET:
        return {0: math.pi / a * bp, 1: math.pi * bm}
    return {
        0: -math.pi / (a * a) * aux.Lambda,
        1: math.pi / a * r3 * bp,
        2: -math.pi * aux.Psi,
        3: math.pi * (2.0 * bm + r3 * a * bp - 2.0 * xi * xi * r3 * aux.lam),
    }


def q2p(kind, k1: float, k2: float, r3, xi: float) -> np.ndarray:
    """
    Partial inverse transform in the free direction of the screened kernel,
    at periodic wavenumber (k1, k2) != (0, 0); shape r3.shape + tensor
    """
    kind = KernelKind.parse(kind)
    aux = aux_2p(k1, k2, r3, xi)
    table = _derivatives_2p(kind, aux)
    g1, g2 = 1j * k1, 1j * k2

    def derivative(counts):
        a, b, c = counts
        return (g1 ** a) * (g2 ** b) * table[c]

    return _assemble(kind, derivative)


def q2p_zero(kind, r3, xi: float) -> np.ndarray:
    """The (k1, k2) = (0, 0) mode of the D=2 integral"""
    kind = KernelKind.parse(kind)
    r3 = np.asarray(r3, dtype=float)
    erf = special.erf(xi * r3)
    gauss = np.exp(-(xi * r3) ** 2)
    if kind is KernelKind.ROTLET:
        out = np.zeros(r3.shape + (3, 3))
        out[..., 0, 1] = 2.0 * math.pi * erf
        out[..., 1, 0] = -2.0 * math.pi * erf
        return out
    if kind is KernelKind.STOKESLET:
        value = -2.0 * math.pi * (2.0 * r3 * erf + gauss / (_SQRT_PI * xi))
        out = np.zeros(r3.shape + (3, 3))
        out[..., 0, 0] = value
        out[..., 1, 1] = value
        return out
    value = -4.0 * math.pi * (erf + xi * r3 * gauss / _SQRT_PI)
    out = np.zeros(r3.shape + (3, 3, 3))
    for j, l, m in ((0, 0, 2), (1, 1, 2), (2, 2, 2)):
        for index in {(j, l, m), (j, m, l), (m, j, l)}:
            out[(...,) + index] = value
    return out


# ===== SINGLY PERIODIC INTEGRALS =====


@dataclass
class Aux1P:
    """Auxiliary quantities of the D=1 integrals for many (r2, r3)"""
    rho: np.ndarray
    U: float
    V: np.ndarray
    r2t: np.ndarray
    r3t: np.ndarray
    phi0: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray


def aux_1p(k1: float, r2, r3, xi: float) -> Aux1P:
    r2 = np.asarray(r2, dtype=float)
    r3 = np.asarray(r3, dtype=float)
    rho = np.hypot(r2, r3)
    V = (xi * rho) ** 2
    safe_rho = np.where(rho > 0, rho, 1.0)
    safe_V = np.where(V > 0, V, 1.0)
    phi0 = np.where(rho > 0, special.exp1(safe_V) + np.log(safe_rho ** 2) + 1.0,
                    -EULER_GAMMA - math.log(xi * xi) + 1.0)
    phi1 = -np.expm1(-V)
    return Aux1P(rho=rho, U=k1 * k1 / (4.0 * xi * xi), V=V,
                 r2t=np.where(rho > 0, r2 / safe_rho, 0.0),
                 r3t=np.where(rho > 0, r3 / safe_rho, 0.0),
                 phi0=phi0, phi1=phi1, phi2=phi1 - V * np.exp(-V))


def _derivatives_1p(kind: KernelKind, k1: float, r2: np.ndarray, r3: np.ndarray,
                    xi: float) -> Dict[Tuple[int, int], np.ndarray]:
    """
    d2^b d3^c of Q^H = K_0(U, V) or Q^B = -K_{-1}(U, V)/(2 xi^2), using
    dK_nu/dr_i = -2 xi^2 r_i K_{nu+1}
    """
    U = k1 * k1 / (4.0 * xi * xi)
    V = xi * xi * (r2 * r2 + r3 * r3)
    s = 2.0 * xi * xi
    orders = (0, 1) if kind is KernelKind.ROTLET else (-1, 0, 1, 2)
    K = {nu: values.reshape(V.shape)
         for nu, values in incomplete_bessel_K_batch(orders, U, V.ravel()).items()}
    if kind is KernelKind.ROTLET:
        return {(0, 0): K[0], (1, 0): -s * r2 * K[1], (0, 1): -s * r3 * K[1]}
    return {
        (0, 0): -K[-1] / s,
        (1, 0): r2 * K[0],
        (0, 1): r3 * K[0],
        (2, 0): K[0] - s * r2 * r2 * K[1],
        (1, 1): -s * r2 * r3 * K[1],
        (0, 2): K[0] - s * r3 * r3 * K[1],
        (3, 0): -3.0 * s * r2 * K[1] + s * s * r2 ** 3 * K[2],
        (2, 1): -s * r3 * K[1] + s * s * r2 * r2 * r3 * K[2],
        (1, 2): -s * r2 * K[1] + s * s * r2 * r3 * r3 * K[2],
        (0, 3): -3.0 * s * r3 * K[1] + s * s * r3 ** 3 * K[2],
    }


def q1p(kind, k1: float, r2, r3, xi: float) -> np.ndarray:
    """
    Partial inverse transform in the two free directions at periodic
    wavenumber k1 != 0; rho = 0 is regular since K_nu(U, 0) = E_{nu+1}(U)
    """
    kind = KernelKind.parse(kind)
    if k1 == 0:
        raise DomainError("The D=1 integral needs k1 != 0; use q1p_zero")
    r2, r3 = np.broadcast_arrays(np.asarray(r2, dtype=float), np.asarray(r3, dtype=float))
    table = _derivatives_1p(kind, k1, r2, r3, xi)
    g1 = 1j * k1

    def derivative(counts):
        a, b, c = counts
        return (g1 ** a) * table[(b, c)]

    return _assemble(kind, derivative)


def q1p_zero(kind, r2, r3, xi: float) -> np.ndarray:
    """The k1 = 0 mode of the D=1 integral, with the rho -> 0 limits at rho = 0"""
    kind = KernelKind.parse(kind)
    r2, r3 = np.broadcast_arrays(np.asarray(r2, dtype=float), np.asarray(r3, dtype=float))
    aux = aux_1p(0.0, r2, r3, xi)
    on_axis = aux.rho == 0
    inv_rho = np.where(on_axis, 0.0, 1.0 / np.where(on_axis, 1.0, aux.rho))
    t2, t3 = aux.r2t, aux.r3t
    p0, p1, p2 = aux.phi0, aux.phi1, aux.phi2

    if kind is KernelKind.ROTLET:
        c = 2.0 * p1 * inv_rho
        out = np.zeros(r2.shape + (3, 3))
        out[..., 0, 1], out[..., 0, 2] = c * t3, -c * t2
        out[..., 1, 0], out[..., 2, 0] = -c * t3, c * t2
        return out
    if kind is KernelKind.STOKESLET:
        out = np.zeros(r2.shape + (3, 3))
        out[..., 0, 0] = -2.0 * (p0 + p1)
        out[..., 1, 1] = -(p0 + 2.0 * t3 * t3 * p1)
        out[..., 2, 2] = -(p0 + 2.0 * t2 * t2 * p1)
        out[..., 1, 2] = out[..., 2, 1] = 2.0 * t2 * t3 * p1
        return out

    R = -4.0 * inv_rho
    entries = {
        (0, 0, 1): R * t2 * (2.0 * p1 - p2),
        (0, 0, 2): R * t3 * (2.0 * p1 - p2),
        (1, 1, 1): R * t2 * (3.0 * p1 - (t2 * t2 + 3.0 * t3 * t3) * p2),
        (1, 1, 2): R * t3 * (p1 - (t3 * t3 - t2 * t2) * p2),
        (1, 2, 2): R * t2 * (p1 - (t2 * t2 - t3 * t3) * p2),
        (2, 2, 2): R * t3 * (3.0 * p1 - (3.0 * t2 * t2 + t3 * t3) * p2),
    }
    out = np.zeros(r2.shape + (3, 3, 3))
    for (j, l, m), value in entries.items():
        for index in {(j, l, m), (j, m, l), (l, j, m), (l, m, j), (m, j, l), (m, l, j)}:
            out[(...,) + index] = value
    return out


# ===== TRUNCATED Q-SUMS =====


def _k_max_per_axis(k_max: Union[float, Sequence[float]], d: int) -> np.ndarray:
    values = np.broadcast_to(np.asarray(k_max, dtype=float), (d,)) if np.ndim(k_max) == 0 \
        else np.asarray(k_max, dtype=float)
    if values.shape != (d,) or np.any(values <= 0):
        raise ConfigurationError(f"Need {d} positive k_max values, got {k_max}")
    return values


def fourier_reference_potential(system: SourceSystem, targets: TargetSet, xi: float,
                                k_max: Union[float, Sequence[float]]) -> np.ndarray:
    """
    Fourier-space potential for D=2 or D=1 from the analytical q-tensors,
    summed over |k_i| <= k_max_i on the periodic axes plus the zero mode
    """
    d = system.d
    if d not in (1, 2):
        raise ConfigurationError(f"fourier_reference_potential handles D=1 and D=2, got D={d}")
    _check_oracle_size(system, targets)
    started = time.perf_counter()
    kind = system.kind
    L = system.cell.lengths
    limits = _k_max_per_axis(k_max, d)
    axes = [_wavenumbers(L[i], limits[i]) for i in range(d)]
    modes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    modes = modes[np.any(modes != 0.0, axis=1)]
    area = float(np.prod(L[:d]))

    f = system.source_tensor()
    einsum = "tnjlm,nlm->tnj" if kind is KernelKind.STRESSLET else "tnjl,nl->tnj"
    out = np.zeros((targets.N, 3))
    rows = max(1, PAIR_CHUNK // system.N)
    for start in range(0, targets.N, rows):
        r = targets.positions[start:start + rows, None, :] - system.positions[None, :, :]
        if d == 2:
            zero = q2p_zero(kind, r[..., 2], xi)
        else:
            zero = q1p_zero(kind, r[..., 1], r[..., 2], xi)
        acc = np.einsum(einsum, zero, f).astype(complex)
        for k in modes:
            if d == 2:
                Q = q2p(kind, k[0], k[1], r[..., 2], xi)
                phase = np.exp(1j * (k[0] * r[..., 0] + k[1] * r[..., 1]))
            else:
                Q = q1p(kind, k[0], r[..., 1], r[..., 2], xi)
                phase = np.exp(1j * k[0] * r[..., 0])
            acc = acc + np.einsum(einsum, Q, f) * phase[..., None]
        out[start:start + rows] = np.real(acc.sum(axis=1)) / area
    logger.debug(f"{d}P q-sum over {modes.shape[0]} modes in {time.perf_counter() - started:.2f}s")
    return out


def reference_fourier_part(system: SourceSystem, targets: TargetSet, xi: float,
                           k_max) -> np.ndarray:
    """Fourier-space oracle matching the periodicity of the system (D = 3, 2 or 1)"""
    if system.d == 3:
        return direct_ewald_fourier_3p(system, targets, xi, float(np.max(k_max)))
    return fourier_reference_potential(system, targets, xi, k_max)


# ===== ERROR METRICS =====


def rms_error(u, u_ref) -> float:
    u = np.asarray(u, dtype=float)
    u_ref = np.asarray(u_ref, dtype=float)
    if u.shape != u_ref.shape:
        raise DomainError(f"Shape mismatch {u.shape} vs {u_ref.shape}")
    if u.size == 0:
        raise DomainError("rms error of an empty field")
    return float(np.sqrt(np.mean(np.sum((u - u_ref) ** 2, axis=-1))))


def rel_rms_error(u, u_ref) -> float:
    norm = rms_error(np.zeros_like(np.asarray(u_ref, dtype=float)), u_ref)
    if norm == 0:
        raise DomainError("Relative rms error against a zero reference")
    return rms_error(u, u_ref) / norm


# ===== RANDOM SYSTEMS =====


def uniform_positions(n: int, cell: PrimaryCell, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(n, 3)) * cell.lengths


def clustered_positions(n: int, cell: PrimaryCell, rng: np.random.Generator) -> np.ndarray:
    """Points only in [0, 1/3)^3 and [2/3, 1)^3 of the cell, split evenly"""
    u = rng.uniform(0.0, 1.0 / 3.0, size=(n, 3))
    u[n // 2:] += 2.0 / 3.0
    return u * cell.lengths


def scale_strengths_to_Q(system: SourceSystem, Q: float) -> SourceSystem:
    """Rescale strengths by one common factor so that source_quantity_Q equals Q"""
    current = source_quantity_Q(system)
    if current == 0:
        raise DomainError("Cannot rescale all-zero strengths")
    return system.with_strengths(system.strengths * math.sqrt(Q / current))


def random_system(kind, n: int, cell: PrimaryCell, d: int, Q: float = 1.0,
                  seed: int = 0, clustered: bool = False) -> SourceSystem:
    """Uniform or clustered positions, strength components uniform in [-a, a] scaled to Q"""
    kind = KernelKind.parse(kind)
    rng = np.random.default_rng(seed)
    positions = (clustered_positions if clustered else uniform_positions)(n, cell, rng)
    strengths = rng.uniform(-1.0, 1.0, size=(n, 3))
    normals = rng.uniform(-1.0, 1.0, size=(n, 3)) if kind is KernelKind.STRESSLET else None
    system = SourceSystem(kind, cell, positions, strengths, normals, Periodicity(d))
    return scale_strengths_to_Q(system, Q)


# ===== STRESSLET IDENTITY =====


def sphere_quadrature(center, radius: float, order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gauss-Legendre in cos(theta) times the trapezoidal rule in phi

    Returns nodes (n, 3), outward unit normals (n, 3) and area weights (n,).
    """
    if order < 2:
        raise ConfigurationError(f"Sphere quadrature order must be >= 2, got {order}")
    mu, w_mu = np.polynomial.legendre.leggauss(order)
    n_phi = 2 * order
    phi = 2.0 * math.pi * np.arange(n_phi) / n_phi
    mu_g, phi_g = np.meshgrid(mu, phi, indexing="ij")
    sin_t = np.sqrt(1.0 - mu_g ** 2)
    normals = np.stack([sin_t * np.cos(phi_g), sin_t * np.sin(phi_g), mu_g], axis=-1).reshape(-1, 3)
    weights = (np.repeat(w_mu, n_phi) * (2.0 * math.pi / n_phi) * radius * radius)
    return np.asarray(center, dtype=float) + radius * normals, normals, weights


IDENTITY_EXPECTED = {"interior": 8.0, "surface": 4.0, "exterior": 0.0}


def stresslet_identity_check(d: int, center, radius: float, order: int, target_class: str,
                             cell: Optional[PrimaryCell] = None, q0=(1.0, -0.5, 0.25),
                             xi: float = 10.0, tol: float = 1e-10,
                             params=None) -> float:
    """
    Residual |u - c pi q0| / (8 pi |q0|) of the discretised stresslet double layer
    over a sphere, with c = 8 inside, 4 on the surface and 0 outside

    The surface case evaluates halfway between quadrature nodes and is
    only indicative at moderate orders.
    """
    if target_class not in IDENTITY_EXPECTED:
        raise ConfigurationError(f"Unknown target class '{target_class}', "
                                 f"expected one of {sorted(IDENTITY_EXPECTED)}")
    cell = cell or PrimaryCell.cube(1.0)
    center = np.asarray(center, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    if np.any(center - radius <= 0) or np.any(center + radius >= cell.lengths):
        raise ConfigurationError("The sphere must lie strictly inside the primary cell")

    nodes, normals, weights = sphere_quadrature(center, radius, order)
    strengths = np.outer(weights, q0)
    system = SourceSystem(KernelKind.STRESSLET, cell, nodes, strengths, normals, Periodicity(d))

    if target_class == "interior":
        x = center + 0.3 * radius * np.array([[0.0, 0.0, 0.0], [0.5, -0.3, 0.2]])
    elif target_class == "exterior":
        gap = 0.5 * (float(np.min(np.minimum(center, cell.lengths - center))) - radius)
        x = center + (radius + gap) * np.array([[1.0, 0.0, 0.0], [0.0, -0.6, 0.8]])
    else:
        mu, _ = np.polynomial.legendre.leggauss(order)
        cos_t = 0.5 * (mu[order // 2 - 1] + mu[order // 2])
        sin_t = math.sqrt(1.0 - cos_t * cos_t)
        phi = math.pi / (2 * order)
        x = center[None, :] + radius * np.array([[sin_t * math.cos(phi), sin_t * math.sin(phi), cos_t]])
    targets = TargetSet(x)

    if params is None:
        params, _ = select_parameters(KernelKind.STRESSLET, d, cell, source_quantity_Q(system),
                                      xi, tol)
    u = full_potential(system, targets, params)
    expected = IDENTITY_EXPECTED[target_class] * math.pi * q0
    residual = float(np.max(np.linalg.norm(u - expected, axis=1)) / (8.0 * math.pi * np.linalg.norm(q0)))
    logger.info(f"Stresslet identity D={d} {target_class} order={order}: residual {residual:.3e}")
    return residual
