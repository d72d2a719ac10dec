#window.py
"""
window
Window functions for gridding and gathering

Kaiser-Bessel (exact), its piecewise polynomial approximation (PKB) and
the truncated Gaussian (TG), plus their Fourier transforms. Windows are
even, supported on [-a_w, a_w] with a_w = hP/2, and used in tensor
product form w(r) = w0(r1) w0(r2) w0(r3).
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy import special

from domain import ConfigurationError

logger = logging.getLogger(__name__)


class WindowKind(str, Enum):
    KB = "kb"
    PKB = "pkb"
    TG = "tg"

    @classmethod
    def parse(cls, value) -> "WindowKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigurationError(f"Unknown window '{value}', expected kb, pkb or tg")


@dataclass(frozen=True)
class WindowSpec:
    """Window size P (grid points of support), spacing h and shape parameters"""
    kind: WindowKind
    P: int
    h: float
    beta: Optional[float] = None
    nu: Optional[int] = None
    alpha: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", WindowKind.parse(self.kind))
        if int(self.P) != self.P or self.P < 2 or self.P % 2:
            raise ConfigurationError(f"Window size P must be an even integer >= 2, got {self.P}")
        if not self.h > 0:
            raise ConfigurationError(f"Grid spacing must be positive, got {self.h}")
        object.__setattr__(self, "P", int(self.P))
        if self.beta is None:
            object.__setattr__(self, "beta", 2.5 * self.P)
        if self.nu is None:
            object.__setattr__(self, "nu", min(self.P // 2 + 2, 10))
        if self.alpha is None:
            object.__setattr__(self, "alpha", 0.91 * 0.5 * math.pi * self.P)
        if self.beta <= 0 or self.alpha <= 0 or self.nu < 1:
            raise ConfigurationError("Window shape parameters must be positive")

    @property
    def a_w(self) -> float:
        return 0.5 * self.h * self.P


# ===== KAISER-BESSEL =====


def kb_eval(spec: WindowSpec, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    t = r / spec.a_w
    inside = np.abs(t) <= 1.0
    arg = spec.beta * np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    # I0(x)/I0(beta) through the scaled i0e to stay finite for large beta
    out = special.i0e(arg) * np.exp(arg - spec.beta) / special.i0e(spec.beta)
    return np.where(inside, out, 0.0)


def kb_hat(spec: WindowSpec, k) -> np.ndarray:
    """2 a_w sinh(sqrt(beta^2 - k^2 a_w^2)) / (I0(beta) sqrt(...)), continued to sin past k a_w = beta"""
    k = np.asarray(k, dtype=float)
    a, beta = spec.a_w, spec.beta
    s = beta * beta - (k * a) ** 2
    root = np.sqrt(np.abs(s))
    near = np.abs(s) < 1e-6
    safe_root = np.where(near, 1.0, root)
    rp = np.where(s > 0, root, 0.0)
    pos = (np.exp(rp - beta) - np.exp(-rp - beta)) / (2.0 * safe_root)
    neg = np.sin(root) / safe_root * math.exp(-beta)
    ratio = np.where(s > 0, pos, neg)
    ratio = np.where(near, (1.0 + s / 6.0 + s * s / 120.0) * math.exp(-beta), ratio)
    return 2.0 * a * ratio / special.i0e(beta)


# ===== POLYNOMIAL KAISER-BESSEL =====


@dataclass(frozen=True)
class PiecewisePolyWindow:
    """Monomial coefficients per subinterval [l h, (l+1) h], l = -P/2 .. P/2-1, in t in [-1, 1]"""
    spec: WindowSpec
    coefficients: np.ndarray

    @property
    def degree(self) -> int:
        return self.coefficients.shape[1] - 1


def pkb_build(spec: WindowSpec) -> PiecewisePolyWindow:
    nu = spec.nu
    nodes = np.cos(np.arange(nu + 1) * math.pi / nu)
    coefficients = np.empty((spec.P, nu + 1))
    for i, l in enumerate(range(-spec.P // 2, spec.P // 2)):
        x = (l + 0.5 + 0.5 * nodes) * spec.h
        # highest power first, for Horner
        coefficients[i] = np.polyfit(nodes, kb_eval(spec, x), nu)
    coefficients.setflags(write=False)
    logger.debug(f"PKB table built: P={spec.P}, nu={nu}, beta={spec.beta}")
    return PiecewisePolyWindow(spec, coefficients)


def pkb_eval(window: PiecewisePolyWindow, r) -> np.ndarray:
    spec = window.spec
    r = np.asarray(r, dtype=float)
    u = r / spec.h
    index = np.clip(np.floor(u).astype(int) + spec.P // 2, 0, spec.P - 1)
    t = 2.0 * (u - (index - spec.P // 2) - 0.5)
    coeffs = window.coefficients[index]
    out = np.zeros_like(r)
    for j in range(coeffs.shape[-1]):
        out = out * t + coeffs[..., j]
    return np.where(np.abs(r) <= spec.a_w, out, 0.0)


# ===== TRUNCATED GAUSSIAN =====


def tg_eval(spec: WindowSpec, r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    t = r / spec.a_w
    return np.where(np.abs(t) <= 1.0, np.exp(-spec.alpha * t * t), 0.0)


def ug_hat(spec: WindowSpec, k) -> np.ndarray:
    """Transform of the untruncated Gaussian, used in place of the truncated one"""
    k = np.asarray(k, dtype=float)
    a = spec.a_w
    return math.sqrt(math.pi / spec.alpha) * a * np.exp(-(k * a) ** 2 / (4.0 * spec.alpha))


# ===== WINDOW OBJECT =====


class Window:
    """One-dimensional window w0 and its transform, chosen by spec.kind"""

    def __init__(self, spec: WindowSpec):
        self.spec = spec
        self.logger = logging.getLogger(f"{__name__}.Window")
        self._poly = pkb_build(spec) if spec.kind is WindowKind.PKB else None

    @property
    def P(self) -> int:
        return self.spec.P

    @property
    def h(self) -> float:
        return self.spec.h

    def evaluate(self, r) -> np.ndarray:
        if self.spec.kind is WindowKind.PKB:
            return pkb_eval(self._poly, r)
        if self.spec.kind is WindowKind.KB:
            return kb_eval(self.spec, r)
        return tg_eval(self.spec, r)

    def hat(self, k) -> np.ndarray:
        if self.spec.kind is WindowKind.TG:
            return ug_hat(self.spec, k)
        return kb_hat(self.spec, k)

    def tensor_evaluate(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return (self.evaluate(r[..., 0]) * self.evaluate(r[..., 1])
                * self.evaluate(r[..., 2]))


def tensor_window_eval(spec: WindowSpec, r) -> np.ndarray:
    return Window(spec).tensor_evaluate(r)
