#realspace.py
"""
realspace
Cut-off real-space Ewald sum and assembly of the full potential

Sources are bucketed into a uniform cell list with subcells at least r_c
wide, and each target only visits its 27 neighbouring subcells. Periodic
wrap-around is handled with explicit image shifts per neighbour offset.
"""

import concurrent.futures as cf
import logging
import time
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np

from domain import (ConfigurationError, DomainError, KernelKind, Periodicity, SourceSystem,
                    TargetSet, wrap_position)
from fourier_engine import FourierSolver
from kernels import contract, realspace_kernel, self_term, stresslet_zero_mode_3p

logger = logging.getLogger(__name__)

PAIR_CHUNK = 2 ** 17
NEIGHBOUR_OFFSETS = np.array(list(product((-1, 0, 1), repeat=3)))


@dataclass(frozen=True)
class CellList:
    """Sources sorted by subcell; bucket c holds order[starts[c]:starts[c+1]]"""
    n_cells: np.ndarray
    cell_size: np.ndarray
    order: np.ndarray
    starts: np.ndarray
    periodicity: Periodicity

    def cell_coords(self, x: np.ndarray) -> np.ndarray:
        coords = np.floor(x / self.cell_size).astype(int)
        return np.clip(coords, 0, self.n_cells - 1)

    def flat(self, coords: np.ndarray) -> np.ndarray:
        return np.ravel_multi_index(coords.T, tuple(self.n_cells))

    def occupied(self) -> int:
        return int(np.count_nonzero(np.diff(self.starts)))


def build_cell_list(system: SourceSystem, r_c: float) -> CellList:
    if not r_c > 0:
        raise DomainError(f"Cut-off radius must be positive, got {r_c}")
    L = system.cell.lengths
    n_cells = np.maximum(1, np.floor(L / r_c).astype(int))
    cell_size = L / n_cells
    coords = np.clip(np.floor(system.positions / cell_size).astype(int), 0, n_cells - 1)
    flat = np.ravel_multi_index(coords.T, tuple(n_cells))
    order = np.argsort(flat, kind="stable")
    starts = np.searchsorted(flat[order], np.arange(int(np.prod(n_cells)) + 1))
    return CellList(n_cells, cell_size, order, starts, system.periodicity)


def _accumulate(out: np.ndarray, system: SourceSystem, targets_x: np.ndarray,
                t_index: np.ndarray, s_index: np.ndarray, shifts: np.ndarray,
                xi: float, r_c: float, starred: bool, first_target: int = 0):
    """Add G^R(x_t - x_s - p) f_s for every candidate pair within r_c

    Target indices are local to targets_x, which starts at global target
    first_target.
    """
    strengths = system.source_tensor()
    for start in range(0, t_index.size, PAIR_CHUNK):
        ti = t_index[start:start + PAIR_CHUNK]
        si = s_index[start:start + PAIR_CHUNK]
        shift = shifts[start:start + PAIR_CHUNK]
        r = targets_x[ti] - system.positions[si] - shift
        keep = np.sum(r * r, axis=1) < r_c * r_c
        if starred:
            keep &= ~((ti + first_target == si) & np.all(shift == 0.0, axis=1))
        if not np.any(keep):
            continue
        ti, si, r = ti[keep], si[keep], r[keep]
        values = contract(system.kind, realspace_kernel(system.kind, r, xi), strengths[si])
        for j in range(3):
            out[:, j] += np.bincount(ti, weights=values[:, j], minlength=out.shape[0])


def _cell_list_pairs(cells: CellList, system: SourceSystem, x: np.ndarray):
    """Yield (target index, source index, shift vectors) per neighbour offset"""
    L = system.cell.lengths
    d = system.d
    base = cells.cell_coords(x)
    counts = np.diff(cells.starts)
    targets = np.arange(x.shape[0])
    for offset in NEIGHBOUR_OFFSETS:
        nb = base + offset
        shift = np.zeros((x.shape[0], 3))
        valid = np.ones(x.shape[0], dtype=bool)
        for i in range(3):
            if i < d:
                wraps = np.floor_divide(nb[:, i], cells.n_cells[i])
                shift[:, i] = wraps * L[i]
                nb[:, i] -= wraps * cells.n_cells[i]
            else:
                valid &= (nb[:, i] >= 0) & (nb[:, i] < cells.n_cells[i])
        if not np.any(valid):
            continue
        t = targets[valid]
        cell = cells.flat(nb[valid])
        n_per = counts[cell]
        total = int(n_per.sum())
        if total == 0:
            continue
        t_index = np.repeat(t, n_per)
        first = np.repeat(cells.starts[cell], n_per)
        within = np.arange(total) - np.repeat(np.cumsum(n_per) - n_per, n_per)
        s_index = cells.order[first + within]
        yield t_index, s_index, np.repeat(shift[valid], n_per, axis=0)


def _shell_pairs(system: SourceSystem, x: np.ndarray, r_c: float):
    """All image shifts |p_i| <= ceil(r_c/L_i) on periodic axes, all pairs per shift"""
    L = system.cell.lengths
    ranges = []
    for i in range(3):
        n = int(np.ceil(r_c / L[i])) + 1 if i < system.d else 0
        ranges.append(range(-n, n + 1))
    t_all = np.repeat(np.arange(x.shape[0]), system.N)
    s_all = np.tile(np.arange(system.N), x.shape[0])
    for p in product(*ranges):
        shift = np.array(p, dtype=float) * L
        yield t_all, s_all, np.broadcast_to(shift, (t_all.size, 3))


def _realspace_block(system: SourceSystem, x: np.ndarray, first_target: int, xi: float,
                     r_c: float, starred: bool, cells: Optional[CellList]) -> np.ndarray:
    out = np.zeros((x.shape[0], 3))
    pairs = _shell_pairs(system, x, r_c) if cells is None else _cell_list_pairs(cells, system, x)
    for t_index, s_index, shifts in pairs:
        _accumulate(out, system, x, t_index, s_index, shifts, xi, r_c, starred, first_target)
    return out


def realspace_potential(system: SourceSystem, targets: TargetSet, xi: float, r_c: float,
                        starred: Optional[bool] = None, workers: int = 1) -> np.ndarray:
    """
    sum_n sum_p G^R(x - x_n + p; xi) f_n over |x - x_n + p| < r_c

    The starred sum drops the p = 0, n = m term and needs targets that
    coincide with the sources. With workers > 1 the targets are split into
    contiguous blocks evaluated on a thread pool over one shared cell list.
    """
    if starred is None:
        starred = targets.coincides_with_sources
    if starred:
        targets.check_against(system)
    if not r_c > 0:
        raise DomainError(f"Cut-off radius must be positive, got {r_c}")
    if workers < 1:
        raise DomainError(f"workers must be at least 1, got {workers}")
    x = wrap_position(targets.positions, system.cell, system.periodicity)
    L = system.cell.lengths
    # the subcells tile the primary cell only, so free-axis targets stay inside it
    for i in system.periodicity.free_axes:
        if np.any(x[:, i] < 0) or np.any(x[:, i] >= L[i]):
            raise ConfigurationError(f"Targets must lie in [0, L{i + 1}) along free axis {i + 1}")

    started = time.perf_counter()
    cells = None
    if any(r_c > L[i] for i in system.periodicity.periodic_axes):
        logger.warning(f"r_c={r_c:.4g} exceeds a periodic side; falling back to shell "
                       f"enumeration, which is O(N^2) per image")
    else:
        cells = build_cell_list(system, r_c)

    blocks = min(workers, targets.N)
    if blocks <= 1:
        out = _realspace_block(system, x, 0, xi, r_c, starred, cells)
    else:
        bounds = np.linspace(0, targets.N, blocks + 1).astype(int)
        with cf.ThreadPoolExecutor(max_workers=blocks) as executor:
            fs = [executor.submit(_realspace_block, system, x[lo:hi], int(lo), xi, r_c, starred,
                                  cells)
                  for lo, hi in zip(bounds[:-1], bounds[1:])]
            out = np.concatenate([f.result() for f in fs])
    logger.debug(f"Real-space sum for {targets.N} targets on {max(blocks, 1)} thread(s) in "
                 f"{time.perf_counter() - started:.3f}s")
    return out


# ===== FULL POTENTIAL =====


@dataclass
class EwaldPotential:
    real: np.ndarray
    fourier: np.ndarray
    self_interaction: np.ndarray
    zero_mode: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.real + self.fourier + self.self_interaction + self.zero_mode


def potential_parts(system: SourceSystem, targets: TargetSet, params,
                    solver: Optional[FourierSolver] = None, workers: int = 1) -> EwaldPotential:
    starred = targets.coincides_with_sources
    solver = solver or FourierSolver(system.kind, system.cell, system.d, params)
    real = realspace_potential(system, targets, params.xi, params.r_c, starred, workers)
    fourier = solver.potential(system, targets)
    if starred:
        own = self_term(system.kind, params.xi, system.source_tensor())
    else:
        own = np.zeros((targets.N, 3))
    zero_mode = stresslet_zero_mode_3p(targets, system)
    return EwaldPotential(real, fourier, own, zero_mode)


def full_potential(system: SourceSystem, targets: TargetSet, params,
                   solver: Optional[FourierSolver] = None, workers: int = 1) -> np.ndarray:
    """u = u^R + u^F + u^self (starred) + stresslet k=0 term (D=3)"""
    return potential_parts(system, targets, params, solver, workers).total
