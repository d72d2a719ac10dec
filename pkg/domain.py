#domain.py
"""
domain
Core value types shared by every Spectral Ewald module

Cells, periodicity, kernel kinds, source systems and target sets, plus the
exception hierarchy used across the library.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Optional, Tuple

import numpy as np

logger = logging.getLogger(__name__)

# ===== EXCEPTIONS =====


class EwaldError(Exception):
    """Base class for all library errors"""


class DomainError(EwaldError, ValueError):
    """Argument outside the domain of a function"""


class SingularityError(EwaldError, ValueError):
    """Kernel evaluated at a singular point"""


class ConfigurationError(EwaldError, ValueError):
    """Inconsistent grid, window or parameter set"""


class InfeasibleToleranceError(EwaldError):
    """No parameter set can meet the requested tolerance"""


class ParticleFileError(EwaldError, ValueError):
    """Malformed particle file"""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


# ===== VALUE TYPES =====


class KernelKind(str, Enum):
    STOKESLET = "stokeslet"
    STRESSLET = "stresslet"
    ROTLET = "rotlet"

    @property
    def tensor_rank(self) -> int:
        return 3 if self is KernelKind.STRESSLET else 2

    @property
    def is_biharmonic(self) -> bool:
        return self is not KernelKind.ROTLET

    @property
    def source_components(self) -> int:
        """Number of scalar fields spread to the grid"""
        return 9 if self is KernelKind.STRESSLET else 3

    @classmethod
    def parse(cls, value) -> "KernelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"Unknown kernel '{value}', expected one of: "
                              f"{', '.join(k.value for k in cls)}")


@dataclass(frozen=True)
class Periodicity:
    """Number of periodic directions; the first d axes are periodic"""
    d: int = 3

    def __post_init__(self):
        if self.d not in (0, 1, 2, 3):
            raise DomainError(f"Periodicity must be 0, 1, 2 or 3, got {self.d}")

    @property
    def periodic_axes(self) -> Tuple[int, ...]:
        return tuple(range(self.d))

    @property
    def free_axes(self) -> Tuple[int, ...]:
        return tuple(range(self.d, 3))

    @property
    def mask(self) -> np.ndarray:
        return np.arange(3) < self.d


@dataclass(frozen=True)
class PrimaryCell:
    """Rectangular box [0,L1) x [0,L2) x [0,L3)"""
    L1: float = 1.0
    L2: float = 1.0
    L3: float = 1.0

    def __post_init__(self):
        for name, value in zip(("L1", "L2", "L3"), (self.L1, self.L2, self.L3)):
            if not np.isfinite(value) or value <= 0:
                raise DomainError(f"Cell side {name} must be positive, got {value}")

    @classmethod
    def cube(cls, L: float) -> "PrimaryCell":
        return cls(L, L, L)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.L1, self.L2, self.L3], dtype=float)

    @property
    def volume(self) -> float:
        return float(self.L1 * self.L2 * self.L3)

    @property
    def is_cubic(self) -> bool:
        return self.L1 == self.L2 == self.L3


def _frozen_array(values, name: str, columns: int = 3) -> np.ndarray:
    arr = np.array(values, dtype=float, copy=True)
    if arr.ndim == 1 and arr.size == columns:
        arr = arr.reshape(1, columns)
    if arr.ndim != 2 or arr.shape[1] != columns:
        raise DomainError(f"{name} must have shape (N, {columns}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SourceSystem:
    """
    Point sources inside the primary cell

    For stokeslets and rotlets `strengths` holds the vectors f_n. For
    stresslets `strengths` holds q_n and `normals` holds nu_n, so that
    f_lm = q_l nu_m exactly.
    """
    kind: KernelKind
    cell: PrimaryCell
    positions: np.ndarray
    strengths: np.ndarray
    normals: Optional[np.ndarray] = None
    periodicity: Periodicity = field(default_factory=Periodicity)

    def __post_init__(self):
        object.__setattr__(self, "kind", KernelKind.parse(self.kind))
        positions = _frozen_array(self.positions, "positions")
        strengths = _frozen_array(self.strengths, "strengths")
        if positions.shape[0] < 1:
            raise DomainError("A source system needs at least one source")
        if strengths.shape != positions.shape:
            raise DomainError(f"strengths shape {strengths.shape} does not match "
                              f"positions shape {positions.shape}")
        L = self.cell.lengths
        if np.any(positions < 0) or np.any(positions >= L):
            raise DomainError("All source positions must lie in the half-open primary cell")
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "strengths", strengths)

        if self.kind is KernelKind.STRESSLET:
            if self.normals is None:
                raise DomainError("Stresslet sources need normals (q, nu pairs)")
            normals = _frozen_array(self.normals, "normals")
            if normals.shape != positions.shape:
                raise DomainError("normals shape does not match positions")
            object.__setattr__(self, "normals", normals)
        elif self.normals is not None:
            raise DomainError(f"{self.kind.value} sources take no normals")

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    @property
    def d(self) -> int:
        return self.periodicity.d

    def source_tensor(self) -> np.ndarray:
        """Spread components per source: (N, 3) vectors or (N, 3, 3) outer products"""
        if self.kind is KernelKind.STRESSLET:
            return np.einsum("nl,nm->nlm", self.strengths, self.normals)
        return np.array(self.strengths)

    def grid_components(self) -> np.ndarray:
        """Source data flattened to (N, C) with C = 3 or 9"""
        return self.source_tensor().reshape(self.N, -1)

    def with_strengths(self, strengths, normals=None) -> "SourceSystem":
        return SourceSystem(self.kind, self.cell, self.positions, strengths,
                            normals if normals is not None else self.normals,
                            self.periodicity)


@dataclass(frozen=True)
class TargetSet:
    """Evaluation points; coincides_with_sources selects the starred sum"""
    positions: np.ndarray
    coincides_with_sources: bool = False

    def __post_init__(self):
        object.__setattr__(self, "positions", _frozen_array(self.positions, "target positions"))

    @classmethod
    def from_sources(cls, system: SourceSystem) -> "TargetSet":
        return cls(system.positions, coincides_with_sources=True)

    @property
    def N(self) -> int:
        return self.positions.shape[0]

    def check_against(self, system: SourceSystem):
        if self.coincides_with_sources and (
                self.positions.shape != system.positions.shape
                or not np.array_equal(self.positions, system.positions)):
            raise DomainError("Starred targets must be identical to the source positions")


# ===== OPERATIONS =====


def source_quantity_Q(system: SourceSystem) -> float:
    """Q = sum_n |f_n|^2, with f_lm = q_l nu_m for stresslets"""
    if system.kind is KernelKind.STRESSLET:
        # |q (x) nu|_F^2 = |q|^2 |nu|^2
        return float(np.sum(np.sum(system.strengths ** 2, axis=1)
                            * np.sum(system.normals ** 2, axis=1)))
    return float(np.sum(system.strengths ** 2))


def wrap_position(x, cell: PrimaryCell, periodicity: Periodicity) -> np.ndarray:
    """Fold periodic coordinates into [0, L_i); free coordinates are unchanged"""
    x = np.array(x, dtype=float, copy=True)
    L = cell.lengths
    for i in periodicity.periodic_axes:
        xi = x[..., i] - np.floor(x[..., i] / L[i]) * L[i]
        # floor division can round up to L exactly
        x[..., i] = np.where(xi >= L[i], 0.0, xi)
    return x


def minimum_image(r, cell: PrimaryCell, periodicity: Periodicity, r_c: float) -> np.ndarray:
    """All periodic images r + p with |r + p| < r_c, as an (n, 3) array"""
    r = np.asarray(r, dtype=float)
    if r_c <= 0:
        raise DomainError(f"Cut-off radius must be positive, got {r_c}")
    L = cell.lengths
    ranges = []
    for i in range(3):
        if i < periodicity.d:
            n = int(np.ceil((abs(r[i]) + r_c) / L[i]))
            ranges.append(range(-n, n + 1))
        else:
            ranges.append(range(0, 1))
    shifts = np.array(list(product(*ranges)), dtype=float) * L
    images = r + shifts
    keep = np.sum(images ** 2, axis=1) < r_c ** 2
    return images[keep]
