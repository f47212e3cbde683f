"""Shared fixtures: the INST-A and single-feature suites, seeded random suites, a reference objective."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional

import numpy as np
import pytest

from tcm.model import CoverageMatrix, Feature, TestCase, TestSuite

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    """Keep tests away from the user's data dir and TCM_* settings."""
    for name in ("TCM_DEBUG", "TCM_LOG_TO_FILE", "TCM_LLM_ENDPOINT", "TCM_LLM_MODEL",
                 "TCM_LLM_API_KEY", "TCM_LLM_TIMEOUT"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("TCM_DATA_DIR", str(tmp_path / "data"))
    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_tcm_handler", False):
            root.removeHandler(handler)
            handler.close()


def make_suite(covers: dict, costs: Optional[dict] = None, features=None) -> TestSuite:
    costs = costs or {}
    if features is None:
        features = []
        for labels in covers.values():
            for fid in labels:
                if fid not in features:
                    features.append(fid)
    return TestSuite(
        tests=tuple(
            TestCase(id=tid, cost=costs.get(tid, 1.0), covers=tuple(labels))
            for tid, labels in covers.items()
        ),
        features=tuple(Feature(id=fid) for fid in features),
    )


@pytest.fixture
def inst_a() -> TestSuite:
    return make_suite(
        {"t1": ["f1"], "t2": ["f1"], "t3": ["f2"], "t4": ["f2", "f3"], "t5": ["f3"]},
        features=["f1", "f2", "f3"],
    )


@pytest.fixture
def single_feature() -> TestSuite:
    return make_suite({"t1": ["f1"], "t2": ["f1"]})


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


def random_suite(
    rng: np.random.Generator,
    n: int,
    m: int,
    single_label: bool = False,
    density: float = 0.3,
) -> TestSuite:
    """
    Random labeled suite with half-integer costs in [0.5, 4.0] (exact in
    binary floating point). Some features may end up uncoverable.
    """
    tests = []
    for i in range(n):
        if single_label:
            labels = [int(rng.integers(m))]
        else:
            labels = [j for j in range(m) if rng.random() < density] or [int(rng.integers(m))]
        cost = float(rng.integers(1, 9)) / 2.0
        tests.append(TestCase(id=f"t{i + 1}", cost=cost, covers=tuple(f"f{j + 1}" for j in labels)))
    features = tuple(Feature(id=f"f{j + 1}") for j in range(m))
    return TestSuite(tests=tuple(tests), features=features)


@pytest.fixture
def suite_factory():
    return random_suite


def all_assignments(n: int) -> np.ndarray:
    """All 2**n rows, lexicographic with column 0 most significant."""
    ks = np.arange(1 << n, dtype=np.int64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    return ((ks[:, None] >> shifts) & 1).astype(np.int8)


def direct_objective(matrix: CoverageMatrix, lam: float, bits: np.ndarray) -> np.ndarray:
    """sum cost*x + lam * sum over coverable features (1 - sum_{S_j} x)^2, per row of bits."""
    x = np.asarray(bits, dtype=float)
    rows = matrix.incidence[matrix.incidence.any(axis=1)].astype(float)
    hits = x @ rows.T
    return x @ np.asarray(matrix.costs, dtype=float) + lam * ((1.0 - hits) ** 2).sum(axis=1)


def brute_force_minimum(matrix: CoverageMatrix, lam: float, chunk_bits: int = 14) -> float:
    n = matrix.n_tests
    best = np.inf
    step = 1 << min(n, chunk_bits)
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    for start in range(0, 1 << n, step):
        ks = np.arange(start, min(start + step, 1 << n), dtype=np.int64)
        bits = ((ks[:, None] >> shifts) & 1).astype(np.int8)
        best = min(best, float(direct_objective(matrix, lam, bits).min()))
    return best
