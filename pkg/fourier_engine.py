#fourier_engine.py
"""
fourier_engine
Fourier-space part of the Spectral Ewald method

Gridding, the adaptive Fourier transform (AFT) with per-mode-class
zero-padding in the free directions, scaling by the modified kernels,
gathering, and the D=0 kernel precomputation. FourierSolver caches every
strength-independent piece so repeated evaluations only pay for the
gridding, transforms and gathering.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import fft

from domain import (ConfigurationError, KernelKind, Periodicity, PrimaryCell, SourceSystem,
                    TargetSet, wrap_position)
from kernels import contract, diffop_hat, screening_for, screening_hat_k2
from modkernels import (ModifiedKernelSpec, gauge_flow_correction, modified_kernel_hat_batched,
                        scalar_hat_0p)
from window import Window, WindowSpec

logger = logging.getLogger(__name__)

# Box extension factor lambda, indexed by kernel then D=0 / D=1,2
EXTENSION_LAMBDA = {
    KernelKind.STOKESLET: (2.2, 2.4),
    KernelKind.STRESSLET: (2.4, 2.4),
    KernelKind.ROTLET: (1.5, 2.4),
}
# Safety threshold theta used in max(P, theta)
EXTENSION_THETA = {
    KernelKind.STOKESLET: 8,
    KernelKind.STRESSLET: 8,
    KernelKind.ROTLET: 0,
}

MOLLIFIER_A = (2.0 / 7.0) * math.sqrt(math.log(100.0))
SCALE_CHUNK = 32768
GRID_CHUNK = 2 ** 22
WINDOW_HAT_FLOOR = 1e-300


def mollifier(t) -> np.ndarray:
    """f_mu(t) = exp(-a^2 t^2) + exp(-a^2 (t-7)^2)"""
    t = np.asarray(t, dtype=float)
    a2 = MOLLIFIER_A ** 2
    return np.exp(-a2 * t * t) + np.exp(-a2 * (t - 7.0) ** 2)


def size_step(f_M: int) -> int:
    return f_M if f_M % 2 == 0 else 2 * f_M


def round_grid_size(value: float, f_M: int) -> int:
    """Smallest even multiple of f_M not below value"""
    step = size_step(f_M)
    return int(step * math.ceil(value / step - 1e-9))


# ===== GRID =====


@dataclass(frozen=True)
class GridSpec:
    """
    Uniform grid on the extended box

    shape holds M_i on periodic axes and the padded M~_i on free axes.
    Free axes start at -dL_i/2 so the primary cell sits in the middle.
    """
    cell: PrimaryCell
    d: int
    h: float
    shape: Tuple[int, int, int]

    def __post_init__(self):
        if not self.h > 0:
            raise ConfigurationError(f"Grid spacing must be positive, got {self.h}")
        shape = tuple(int(n) for n in self.shape)
        if len(shape) != 3 or any(n < 2 or n % 2 for n in shape):
            raise ConfigurationError(f"Grid sizes must be even integers >= 2, got {self.shape}")
        object.__setattr__(self, "shape", shape)
        L = self.cell.lengths
        for i in range(self.d):
            if abs(shape[i] * self.h - L[i]) > 1e-9 * L[i]:
                raise ConfigurationError(f"Periodic side L{i + 1}={L[i]} is not {shape[i]} x h={self.h}")
        for i in range(self.d, 3):
            if shape[i] * self.h < L[i]:
                raise ConfigurationError(f"Extended grid on axis {i + 1} is smaller than the cell")

    @property
    def periodic_axes(self) -> Tuple[int, ...]:
        return tuple(range(self.d))

    @property
    def free_axes(self) -> Tuple[int, ...]:
        return tuple(range(self.d, 3))

    @property
    def periodic_shape(self) -> Tuple[int, ...]:
        return self.shape[:self.d]

    @property
    def free_shape(self) -> Tuple[int, ...]:
        return self.shape[self.d:]

    @property
    def extended_lengths(self) -> np.ndarray:
        return self.h * np.array(self.shape, dtype=float)

    @property
    def padding(self) -> np.ndarray:
        pad = self.extended_lengths - self.cell.lengths
        pad[:self.d] = 0.0
        return pad

    @property
    def origin(self) -> np.ndarray:
        return -0.5 * self.padding

    @property
    def M(self) -> np.ndarray:
        """L_i / h on every axis (integers on periodic axes)"""
        return self.cell.lengths / self.h

    @property
    def n_points(self) -> int:
        return int(np.prod(self.shape))


def build_grid(cell: PrimaryCell, d: int, h: float, P: int, kind, f_M: int) -> GridSpec:
    """Periodic axes take M_i = L_i/h; free axes take M~ = f_M ceil((L/h + P + (lambda-1) max(P, theta))/f_M)"""
    kind = KernelKind.parse(kind)
    if not h > 0:
        raise ConfigurationError(f"Grid spacing must be positive, got {h}")
    if int(P) != P or P % 2 or P < 2:
        raise ConfigurationError(f"Window size must be an even integer, got {P}")
    if f_M < 1:
        raise ConfigurationError(f"f_M must be at least 1, got {f_M}")
    lam = EXTENSION_LAMBDA[kind][0 if d == 0 else 1]
    theta = EXTENSION_THETA[kind]
    shape = []
    for i, L in enumerate(cell.lengths):
        if i < d:
            shape.append(int(round(L / h)))
        else:
            shape.append(round_grid_size(L / h + P + (lam - 1.0) * max(P, theta), f_M))
    return GridSpec(cell, d, h, tuple(shape))


# ===== UPSAMPLING PLAN AND MODE CLASSES =====


@dataclass(frozen=True)
class UpsamplingPlan:
    """
    Free-axis transform sizes per periodic mode class

    zero_sizes apply to k^P = 0, star_sizes to the K_* box
    |kk_i| <= kbar_star, and the remaining modes use the grid sizes.
    """
    s0: float = 1.0
    s_star: Tuple[float, ...] = ()
    kbar_star: int = 0
    zero_sizes: Tuple[int, ...] = ()
    star_sizes: Tuple[int, ...] = ()
    precompute: bool = False


def make_plan(grid: GridSpec, s0: float, s_star, kbar_star: int, f_M: int,
              precompute: bool = False) -> UpsamplingPlan:
    free = grid.free_shape
    if grid.d == 3:
        return UpsamplingPlan()
    if grid.d == 0 and precompute:
        zero_sizes = tuple(2 * n for n in free)
    else:
        zero_sizes = tuple(round_grid_size(s0 * n, f_M) for n in free)
    s_star = tuple(float(s) for s in s_star) if grid.d in (1, 2) else ()
    if s_star and len(s_star) != len(free):
        raise ConfigurationError("s_star needs one value per free axis")
    star_sizes = tuple(round_grid_size(s * n, f_M) for s, n in zip(s_star, free))
    return UpsamplingPlan(float(s0), s_star, int(kbar_star), zero_sizes, star_sizes,
                          bool(precompute and grid.d == 0))


@dataclass(frozen=True)
class ModeClass:
    name: str
    indices: np.ndarray
    sizes: Tuple[int, ...]


def mode_classes(grid: GridSpec, plan: UpsamplingPlan) -> List[ModeClass]:
    """Partition of the periodic modes into {k^P = 0}, K_* and K_inf"""
    if grid.d == 3:
        return [ModeClass("all", np.arange(grid.n_points), ())]
    if grid.d == 0:
        return [ModeClass("zero", np.array([0]), plan.zero_sizes)]
    kk = np.meshgrid(*[np.fft.fftfreq(m) * m for m in grid.periodic_shape], indexing="ij")
    box = np.max(np.abs(np.stack(kk)), axis=0).ravel()
    flat = np.arange(box.size)
    star = flat[(box <= plan.kbar_star) & (flat != 0)]
    rest = flat[(box > plan.kbar_star) & (flat != 0)]
    classes = [ModeClass("zero", np.array([0]), plan.zero_sizes)]
    if star.size:
        classes.append(ModeClass("star", star, plan.star_sizes))
    if rest.size:
        classes.append(ModeClass("inf", rest, grid.free_shape))
    logger.debug(f"Mode classes: zero=1, star={star.size}, inf={rest.size}")
    return classes


def class_wavevectors(grid: GridSpec, mode_class: ModeClass) -> np.ndarray:
    """Flat (n_modes * prod(sizes), 3) wavevectors in the storage order of the class block"""
    L = grid.cell.lengths
    n = mode_class.indices.size
    periodic = np.zeros((n, grid.d))
    if grid.d:
        kk = np.unravel_index(mode_class.indices, grid.periodic_shape)
        for i in range(grid.d):
            m = grid.shape[i]
            signed = np.where(kk[i] >= m // 2, kk[i] - m, kk[i])
            periodic[:, i] = 2.0 * math.pi * signed / L[i]
    free = [2.0 * math.pi * np.fft.fftfreq(N, grid.h) for N in mode_class.sizes]
    axes = [np.arange(n)] + [np.arange(N) for N in mode_class.sizes]
    mesh = np.meshgrid(*axes, indexing="ij")
    k = np.empty(mesh[0].shape + (3,))
    for i in range(grid.d):
        k[..., i] = periodic[mesh[0], i]
    for j, kappa in enumerate(free):
        k[..., grid.d + j] = kappa[mesh[1 + j]]
    return k.reshape(-1, 3)


# ===== FOURIER FIELD AND AFT =====


@dataclass
class FourierField:
    """Per-class blocks of shape (C, n_modes, *free sizes)"""
    grid: GridSpec
    classes: List[ModeClass]
    blocks: List[np.ndarray] = field(default_factory=list)

    @property
    def components(self) -> int:
        return self.blocks[0].shape[0]


def aft_forward(values: np.ndarray, grid: GridSpec, plan: UpsamplingPlan,
                classes: Optional[List[ModeClass]] = None) -> FourierField:
    classes = classes if classes is not None else mode_classes(grid, plan)
    C = values.shape[0]
    periodic_axes = tuple(1 + i for i in grid.periodic_axes)
    transformed = fft.fftn(values, axes=periodic_axes) if grid.d else values.astype(complex)
    flat = transformed.reshape((C, -1) + grid.free_shape)
    free_axes = tuple(range(2, 2 + len(grid.free_shape)))
    blocks = []
    for mode_class in classes:
        block = flat[:, mode_class.indices]
        if free_axes:
            block = fft.fftn(block, s=mode_class.sizes, axes=free_axes)
        blocks.append(block)
    return FourierField(grid, classes, blocks)


def aft_inverse(F: FourierField) -> np.ndarray:
    grid = F.grid
    C = F.components
    free_axes = tuple(range(2, 2 + len(grid.free_shape)))
    flat = np.zeros((C, int(np.prod(grid.periodic_shape, dtype=int))) + grid.free_shape,
                    dtype=complex)
    for mode_class, block in zip(F.classes, F.blocks):
        if free_axes:
            block = fft.ifftn(block, axes=free_axes)
            block = block[(slice(None), slice(None)) + tuple(slice(0, m) for m in grid.free_shape)]
        flat[:, mode_class.indices] = block
    values = flat.reshape((C,) + grid.shape)
    if grid.d:
        values = fft.ifftn(values, axes=tuple(1 + i for i in grid.periodic_axes))
    return values.real


# ===== GRIDDING AND GATHERING =====


def _check_inside(positions: np.ndarray, grid: GridSpec, what: str) -> np.ndarray:
    x = wrap_position(positions, grid.cell, Periodicity(grid.d))
    L = grid.cell.lengths
    for i in grid.free_axes:
        if np.any(x[:, i] < 0) or np.any(x[:, i] >= L[i]):
            raise ConfigurationError(f"{what} must lie in [0, L{i + 1}) along free axis {i + 1}")
    return x


def _stencil(x: np.ndarray, grid: GridSpec, window: Window):
    """Flat grid indices (n, P, P, P) and tensor window weights for points x"""
    P = window.P
    offsets = np.arange(P)
    nodes = []
    weights = []
    for i in range(3):
        s = (x[:, i] - grid.origin[i]) / grid.h
        j = np.floor(s).astype(int)[:, None] - P // 2 + 1 + offsets
        weights.append(window.evaluate((s[:, None] - j) * grid.h))
        if i < grid.d:
            j = np.mod(j, grid.shape[i])
        elif j.min() < 0 or j.max() >= grid.shape[i]:
            raise ConfigurationError(f"Window support leaves the extended grid on axis {i + 1}")
        nodes.append(j)
    j1, j2, j3 = nodes
    w1, w2, w3 = weights
    index = ((j1[:, :, None, None] * grid.shape[1] + j2[:, None, :, None]) * grid.shape[2]
             + j3[:, None, None, :])
    weight = w1[:, :, None, None] * w2[:, None, :, None] * w3[:, None, None, :]
    return index, weight


def spread(system: SourceSystem, grid: GridSpec, window: Window) -> np.ndarray:
    """Phi(x_j) = sum_n sum_p w(x_j - x_n + p) f_n, componentwise, shape (C, *grid.shape)"""
    x = _check_inside(system.positions, grid, "Sources")
    f = system.grid_components()
    C = f.shape[1]
    out = np.zeros((C, grid.n_points))
    chunk = max(1, GRID_CHUNK // window.P ** 3)
    for start in range(0, system.N, chunk):
        index, weight = _stencil(x[start:start + chunk], grid, window)
        flat_index = index.ravel()
        for c in range(C):
            values = (weight * f[start:start + chunk, c][:, None, None, None]).ravel()
            out[c] += np.bincount(flat_index, weights=values, minlength=grid.n_points)
    return out.reshape((C,) + grid.shape)


def gather(values: np.ndarray, grid: GridSpec, window: Window, targets: TargetSet) -> np.ndarray:
    """u(x_m) = h^3 sum_j F(x_j) sum_p w(x_m - x_j + p)"""
    x = _check_inside(targets.positions, grid, "Targets")
    flat = values.reshape(values.shape[0], -1)
    out = np.empty((targets.N, values.shape[0]))
    chunk = max(1, GRID_CHUNK // window.P ** 3)
    for start in range(0, targets.N, chunk):
        index, weight = _stencil(x[start:start + chunk], grid, window)
        n = index.shape[0]
        picked = flat[:, index.reshape(n, -1)]
        out[start:start + n] = np.einsum("cnp,np->nc", picked, weight.reshape(n, -1))
    return out * grid.h ** 3


# ===== SCALING =====


@dataclass(frozen=True)
class PrecomputedKernel0P:
    """Truncated, optionally mollified, re-transformed scalar kernel on the (2M~)^3 grid"""
    table: np.ndarray
    sizes: Tuple[int, int, int]
    mollified: bool


def precompute_0p(spec: ModifiedKernelSpec, grid: GridSpec, s0: float, f_M: int) -> PrecomputedKernel0P:
    if grid.d != 0:
        raise ConfigurationError("Kernel precomputation only applies to D=0")
    M_ext = grid.shape
    upsampled = tuple(max(round_grid_size(s0 * m, f_M), 2 * m) for m in M_ext)
    kappa = [2.0 * math.pi * np.fft.fftfreq(n, grid.h) for n in upsampled]
    k1, k2, k3 = np.meshgrid(*kappa, indexing="ij", sparse=True)
    A_hat = scalar_hat_0p(spec, np.sqrt(k1 ** 2 + k2 ** 2 + k3 ** 2))
    A = fft.ifftn(A_hat).real
    picks = [np.mod(np.arange(-m, m), n) for m, n in zip(M_ext, upsampled)]
    A_tr = A[np.ix_(*picks)]
    mollified = spec.kind.is_biharmonic
    if mollified:
        for axis, m in enumerate(M_ext):
            mu = np.ones(2 * m)
            mu[:4] = mollifier([3, 2, 1, 0])
            mu[-4:] = mollifier([0, 1, 2, 3])
            shape = [1, 1, 1]
            shape[axis] = 2 * m
            A_tr = A_tr * mu.reshape(shape)
    table = fft.fftn(fft.ifftshift(A_tr))
    logger.info(f"Precomputed D=0 kernel: upsampled grid {upsampled}, table {table.shape}, "
                f"mollified={mollified}")
    return PrecomputedKernel0P(table, tuple(2 * m for m in M_ext), mollified)


def _window_hat_squared(window: Window, k: np.ndarray) -> np.ndarray:
    w = window.hat(k[:, 0]) * window.hat(k[:, 1]) * window.hat(k[:, 2])
    if np.any(np.abs(w) < WINDOW_HAT_FLOOR):
        raise ConfigurationError("Window transform vanishes at a retained mode; window too narrow for k_inf")
    return w * w


def scaling_tensors(spec: ModifiedKernelSpec, xi: float, window: Window, grid: GridSpec,
                    mode_class: ModeClass, precomputed: Optional[PrecomputedKernel0P] = None):
    """Yield (slice, G_R hat gamma hat / w hat^2) over the flat modes of one class"""
    k = class_wavevectors(grid, mode_class)
    screening = screening_for(spec.kind)
    rank = spec.kind.tensor_rank
    if precomputed is not None:
        table = precomputed.table.ravel()
        parts = (slice(start, min(start + SCALE_CHUNK, k.shape[0]))
                 for start in range(0, k.shape[0], SCALE_CHUNK))
        tensors = ((part, diffop_hat(spec.kind, k[part])) for part in parts)
    else:
        table = None
        tensors = modified_kernel_hat_batched(spec, k, SCALE_CHUNK)
    for part, tensor in tensors:
        kc = k[part]
        k2 = np.sum(kc * kc, axis=1)
        factor = screening_hat_k2(screening, k2, xi) / _window_hat_squared(window, kc)
        if table is not None:
            factor = factor * table[part]
        yield part, tensor * factor.reshape((-1,) + (1,) * rank)


def apply_scaling(kind: KernelKind, block: np.ndarray, tensor: np.ndarray) -> np.ndarray:
    """(C, n) mode data times (n, 3, 3[, 3]) tensors -> (3, n)"""
    n = block.shape[1]
    if kind is KernelKind.STRESSLET:
        return contract(kind, tensor, block.reshape(3, 3, n).transpose(2, 0, 1)).T
    return contract(kind, tensor, block.T).T


def scale(F: FourierField, spec: ModifiedKernelSpec, xi: float, window: Window,
          precomputed: Optional[PrecomputedKernel0P] = None) -> FourierField:
    blocks = []
    for mode_class, block in zip(F.classes, F.blocks):
        C = block.shape[0]
        data = block.reshape(C, -1)
        out = np.empty((3, data.shape[1]), dtype=complex)
        for part, tensor in scaling_tensors(spec, xi, window, F.grid, mode_class, precomputed):
            out[:, part] = apply_scaling(spec.kind, data[:, part], tensor)
        blocks.append(out.reshape((3,) + block.shape[1:]))
    return FourierField(F.grid, F.classes, blocks)


# ===== SOLVER =====


class FourierSolver:
    """
    Strength-independent state of the Fourier-space computation

    Builds the grid, window, mode classes and (for D=0) the precomputed
    kernel once. Scaling tensors are cached per class while they fit in
    cache_limit complex entries.
    """

    def __init__(self, kind, cell: PrimaryCell, d: int, params,
                 kernel_spec: Optional[ModifiedKernelSpec] = None, cache_limit: int = 2 ** 23):
        self.logger = logging.getLogger(f"{__name__}.FourierSolver")
        self.kind = KernelKind.parse(kind)
        self.cell = cell
        self.d = d
        self.params = params
        started = time.perf_counter()
        self.grid = GridSpec(cell, d, params.h, tuple(params.grid_shape))
        self.window = Window(WindowSpec(params.window, params.P, params.h, params.beta,
                                        params.nu, params.alpha))
        self.plan = make_plan(self.grid, params.s0, params.s_star, params.kbar_star,
                              params.f_M, params.precompute_0p)
        self.classes = mode_classes(self.grid, self.plan)
        if kernel_spec is None:
            kernel_spec = ModifiedKernelSpec.optimal(self.kind, d, params.R if d < 3 else 0.0)
        self.kernel_spec = kernel_spec
        self.precomputed = None
        if self.plan.precompute:
            self.precomputed = precompute_0p(kernel_spec, self.grid, params.s0, params.f_M)
        self._cache: Dict[int, np.ndarray] = {}
        self._fill_cache(cache_limit)
        self.setup_seconds = time.perf_counter() - started
        self.logger.info(f"Fourier solver ready: D={d}, grid {self.grid.shape}, h={params.h:.6g}, "
                         f"P={params.P}, classes={[c.name for c in self.classes]}, "
                         f"setup {self.setup_seconds:.3f}s")

    def _fill_cache(self, cache_limit: int):
        per_mode = 3 ** self.kind.tensor_rank
        total = sum(c.indices.size * int(np.prod(c.sizes, dtype=int)) for c in self.classes)
        if total * per_mode > cache_limit:
            self.logger.debug(f"Scaling tensors not cached ({total} modes)")
            return
        for position, mode_class in enumerate(self.classes):
            parts = [t for _, t in scaling_tensors(self.kernel_spec, self.params.xi, self.window,
                                                   self.grid, mode_class, self.precomputed)]
            self._cache[position] = np.concatenate(parts)

    def _scale(self, F: FourierField) -> FourierField:
        if not self._cache:
            return scale(F, self.kernel_spec, self.params.xi, self.window, self.precomputed)
        blocks = []
        for position, block in enumerate(F.blocks):
            data = block.reshape(block.shape[0], -1)
            out = apply_scaling(self.kind, data, self._cache[position])
            blocks.append(out.reshape((3,) + block.shape[1:]))
        return FourierField(F.grid, F.classes, blocks)

    def potential(self, system: SourceSystem, targets: TargetSet) -> np.ndarray:
        if system.kind is not self.kind or system.d != self.d or system.cell != self.cell:
            raise ConfigurationError("Source system does not match the solver configuration")
        started = time.perf_counter()
        grid_values = spread(system, self.grid, self.window)
        F = aft_forward(grid_values, self.grid, self.plan, self.classes)
        u_grid = aft_inverse(self._scale(F))
        u = gather(u_grid, self.grid, self.window, targets)
        u -= gauge_flow_correction(self.kernel_spec, system)
        self.logger.debug(f"Fourier part for N={system.N}, targets={targets.N} "
                          f"in {time.perf_counter() - started:.3f}s")
        return u


def se_fourier_potential(system: SourceSystem, targets: TargetSet, params,
                         kernel_spec: Optional[ModifiedKernelSpec] = None) -> np.ndarray:
    solver = FourierSolver(system.kind, system.cell, system.d, params, kernel_spec)
    return solver.potential(system, targets)
