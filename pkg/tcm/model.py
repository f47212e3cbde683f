# tcm/model.py
"""
Canonical data model: labeled tests, features, and the coverage incidence
derived from the labels.

Ordering is always declaration order (never sorted) so variable indices are
reproducible across runs. Coverage is declared by labels; nothing here runs
a test body.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

logger = logging.getLogger(__name__)


class SuiteValidationError(Exception):
    """Raised when a suite breaks an id or reference invariant."""

    def __init__(self, message: str, offending_id: Optional[str] = None):
        super().__init__(message)
        self.offending_id = offending_id


# ------------------------------
# Records
# ------------------------------

class Feature(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    description: Optional[str] = None


class TestCase(BaseModel):
    """One labeled test. `cost` is a unitless effort weight."""
    model_config = ConfigDict(frozen=True)
    __test__ = False  # keep pytest from collecting this class

    id: str = Field(..., min_length=1)
    name: str = ""
    cost: float = Field(1.0, ge=0.0)
    covers: Tuple[str, ...] = Field(..., min_length=1)
    body: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def _default_name(cls, data):
        if isinstance(data, dict) and not data.get("name"):
            data = {**data, "name": data.get("id", "")}
        return data

    @field_validator("cost")
    @classmethod
    def _finite_cost(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("cost must be finite")
        return float(v)

    @field_validator("covers")
    @classmethod
    def _dedupe_covers(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        # keep first occurrence; labels form a set but order stays stable
        return tuple(dict.fromkeys(v))


class TestSuite(BaseModel):
    """T_comprehensive (or any subset of it)."""
    model_config = ConfigDict(frozen=True)
    __test__ = False

    tests: Tuple[TestCase, ...] = ()
    features: Tuple[Feature, ...] = ()

    @property
    def test_ids(self) -> List[str]:
        return [t.id for t in self.tests]

    @property
    def feature_ids(self) -> List[str]:
        return [f.id for f in self.features]

    def get(self, test_id: str) -> TestCase:
        for t in self.tests:
            if t.id == test_id:
                return t
        raise KeyError(test_id)

    def check_integrity(self) -> "TestSuite":
        """Check id uniqueness and that every label names a declared feature."""
        seen_features = set()
        for f in self.features:
            if f.id in seen_features:
                raise SuiteValidationError(f"Duplicate feature id: {f.id}", f.id)
            seen_features.add(f.id)

        seen_tests = set()
        for t in self.tests:
            if t.id in seen_tests:
                raise SuiteValidationError(f"Duplicate test id: {t.id}", t.id)
            seen_tests.add(t.id)
            for fid in t.covers:
                if fid not in seen_features:
                    raise SuiteValidationError(
                        f"Test {t.id} covers unknown feature {fid}", fid
                    )
        return self

    def subset(self, test_ids: Iterable[str]) -> "TestSuite":
        """Sub-suite of the given tests in declaration order; all features kept."""
        wanted = set(test_ids)
        unknown = wanted - set(self.test_ids)
        if unknown:
            raise SuiteValidationError(f"Unknown test id: {sorted(unknown)[0]}", sorted(unknown)[0])
        return TestSuite(
            tests=tuple(t for t in self.tests if t.id in wanted),
            features=self.features,
        )


# ------------------------------
# Coverage incidence
# ------------------------------

@dataclass(frozen=True, eq=False)
class CoverageMatrix:
    """
    Feature-by-test incidence. incidence[j, i] is True iff test i covers
    feature j. Arrays are read-only.
    """
    feature_order: Tuple[str, ...]
    test_order: Tuple[str, ...]
    incidence: np.ndarray  # bool, shape (m, n)
    costs: np.ndarray      # float, shape (n,)

    @property
    def n_tests(self) -> int:
        return len(self.test_order)

    @property
    def n_features(self) -> int:
        return len(self.feature_order)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n_features, self.n_tests)

    def test_index(self, test_id: str) -> int:
        try:
            return self.test_order.index(test_id)
        except ValueError:
            raise KeyError(test_id) from None

    def covering_sets(self) -> List[List[int]]:
        """S_j for every feature row, as ascending test indices."""
        return [np.flatnonzero(row).tolist() for row in self.incidence]

    def covers_of(self, test_id: str) -> Tuple[str, ...]:
        col = self.incidence[:, self.test_index(test_id)]
        return tuple(self.feature_order[j] for j in np.flatnonzero(col))

    def coverable_mask(self) -> np.ndarray:
        return self.incidence.any(axis=1) if self.n_tests else np.zeros(self.n_features, dtype=bool)

    def restrict_to_coverable(self) -> "CoverageMatrix":
        """Same columns, all-false rows dropped."""
        keep = self.coverable_mask()
        incidence = self.incidence[keep]
        incidence.setflags(write=False)
        return CoverageMatrix(
            tuple(fid for fid, k in zip(self.feature_order, keep) if k),
            self.test_order,
            incidence,
            self.costs,
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, CoverageMatrix):
            return NotImplemented
        return (
            self.feature_order == other.feature_order
            and self.test_order == other.test_order
            and np.array_equal(self.incidence, other.incidence)
            and np.array_equal(self.costs, other.costs)
        )


def build_coverage_matrix(suite: TestSuite) -> CoverageMatrix:
    """Validate the suite and derive its incidence matrix (declaration order)."""
    suite.check_integrity()

    feature_order = tuple(suite.feature_ids)
    test_order = tuple(suite.test_ids)
    row_of: Dict[str, int] = {fid: j for j, fid in enumerate(feature_order)}

    incidence = np.zeros((len(feature_order), len(test_order)), dtype=bool)
    for i, test in enumerate(suite.tests):
        for fid in test.covers:
            incidence[row_of[fid], i] = True
    costs = np.array([t.cost for t in suite.tests], dtype=float)

    incidence.setflags(write=False)
    costs.setflags(write=False)
    logger.debug(f"[Model] Coverage matrix {incidence.shape[0]}x{incidence.shape[1]}")
    return CoverageMatrix(feature_order, test_order, incidence, costs)


def uncoverable_features(matrix: CoverageMatrix) -> List[str]:
    """Ids of rows no test covers, in row order."""
    mask = matrix.coverable_mask()
    return [fid for fid, ok in zip(matrix.feature_order, mask) if not ok]
