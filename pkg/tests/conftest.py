import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from domain import KernelKind, PrimaryCell  # noqa: E402
from reference import random_system  # noqa: E402

ALL_KINDS = [KernelKind.STOKESLET, KernelKind.STRESSLET, KernelKind.ROTLET]
ALL_D = [3, 2, 1, 0]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def unit_cell():
    return PrimaryCell.cube(1.0)


@pytest.fixture
def make_system(unit_cell):
    def build(kind, d, n=20, Q=1.0, seed=7, cell=None, clustered=False):
        return random_system(kind, n, cell or unit_cell, d, Q, seed, clustered)
    return build


@pytest.fixture
def isolated_env(monkeypatch, tmp_path):
    for name in ("EWALD_LOG_FILE", "EWALD_LOG_LEVEL", "EWALD_OUTPUT_DIR", "EWALD_DEFAULT_FM",
                 "EWALD_THREADS", "EWALD_MAX_ORACLE_N", "EWALD_DEFAULT_SEED",
                 "EWALD_PRECOMPUTE_0P"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.chdir(tmp_path)
    return tmp_path
