# tcm/verify.py
"""
Selection checks: coverage completeness, per-test removability, cost
accounting, and the gap between a QUBO selection and the set-cover optimum.
"""
from __future__ import annotations

import logging
import math
from typing import Any, Dict, Iterable, List

import numpy as np
from pydantic import BaseModel, ConfigDict

from .model import CoverageMatrix, uncoverable_features

logger = logging.getLogger(__name__)

GAP_EPSILON = 1e-12


class CoverageError(Exception):
    """Raised for unknown test ids or selections that fail coverage."""
    pass


class CoverageReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    covered: List[str]
    uncovered: List[str]
    uncoverable: List[str]
    selected: List[str]
    total_cost: float
    removable: List[str]

    @property
    def complete(self) -> bool:
        """True when every coverable feature is covered."""
        return set(self.uncovered) <= set(self.uncoverable)

    def to_document(self) -> Dict[str, Any]:
        return self.model_dump()


class GapReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    qubo_cost: float
    oracle_cost: float
    relative_gap: float


def _mask(matrix: CoverageMatrix, selection: Iterable[str]) -> np.ndarray:
    chosen = np.zeros(matrix.n_tests, dtype=bool)
    index = {tid: i for i, tid in enumerate(matrix.test_order)}
    for tid in selection:
        if tid not in index:
            raise CoverageError(f"Unknown test id: {tid}")
        chosen[index[tid]] = True
    return chosen


def _ids(matrix: CoverageMatrix, mask: np.ndarray) -> List[str]:
    return [matrix.test_order[i] for i in np.flatnonzero(mask)]


def check_coverage(matrix: CoverageMatrix, selection: Iterable[str]) -> CoverageReport:
    """
    covered/uncovered follow feature order; selected and removable follow
    test order. A test is removable when dropping it alone (from the full
    selection) leaves `covered` unchanged.
    """
    chosen = _mask(matrix, selection)
    counts = matrix.incidence[:, chosen].sum(axis=1)

    covered = [fid for fid, c in zip(matrix.feature_order, counts) if c > 0]
    uncovered = [fid for fid, c in zip(matrix.feature_order, counts) if c == 0]

    removable = []
    for i in np.flatnonzero(chosen):
        rows = matrix.incidence[:, i]
        if (counts[rows] >= 2).all():
            removable.append(matrix.test_order[i])

    return CoverageReport(
        covered=covered,
        uncovered=uncovered,
        uncoverable=uncoverable_features(matrix),
        selected=_ids(matrix, chosen),
        total_cost=float(matrix.costs[chosen].sum()),
        removable=removable,
    )


def selection_cost(matrix: CoverageMatrix, selection: Iterable[str]) -> float:
    return float(matrix.costs[_mask(matrix, selection)].sum())


def gap_report(
    matrix: CoverageMatrix,
    qubo_selection: Iterable[str],
    oracle_selection: Iterable[str],
) -> GapReport:
    """relative_gap = (qubo_cost - oracle_cost) / max(oracle_cost, eps)."""
    costs = []
    for label, selection in (("qubo", list(qubo_selection)), ("oracle", list(oracle_selection))):
        report = check_coverage(matrix, selection)
        if not report.complete:
            missing = sorted(set(report.uncovered) - set(report.uncoverable))
            raise CoverageError(f"{label} selection leaves features uncovered: {', '.join(missing)}")
        costs.append(report.total_cost)
    qubo_cost, oracle_cost = costs
    return GapReport(
        qubo_cost=qubo_cost,
        oracle_cost=oracle_cost,
        relative_gap=(qubo_cost - oracle_cost) / max(oracle_cost, GAP_EPSILON),
    )


# ------------------------------
# Repair
# ------------------------------

def greedy_fill(matrix: CoverageMatrix, chosen: np.ndarray, uncovered: np.ndarray) -> int:
    """
    Weighted greedy cover, in place: while `uncovered` has a true row, mark
    the unchosen test with the best newly-covered/cost ratio (lowest index
    on ties; zero-cost tests that cover something rank first). Every true
    row must be coverable. Returns the number of tests added.
    """
    incidence = matrix.incidence
    costs = matrix.costs
    steps = 0
    while uncovered.any():
        gains = incidence[uncovered].sum(axis=0)
        best_i, best_ratio = -1, -1.0
        for i in range(matrix.n_tests):
            if chosen[i] or gains[i] == 0:
                continue
            ratio = math.inf if costs[i] == 0 else gains[i] / costs[i]
            if ratio > best_ratio:
                best_i, best_ratio = i, ratio
        chosen[best_i] = True
        uncovered &= ~incidence[:, best_i]
        steps += 1
    return steps


def prune_selection(matrix: CoverageMatrix, selection: Iterable[str]) -> List[str]:
    """
    Drop redundant tests in declaration order; each drop is judged against
    the tests still kept, so the result stays as covering as the input.
    """
    chosen = _mask(matrix, selection)
    counts = matrix.incidence[:, chosen].sum(axis=1)
    for i in np.flatnonzero(chosen):
        rows = matrix.incidence[:, i]
        if (counts[rows] >= 2).all():
            chosen[i] = False
            counts[rows] -= 1
    return _ids(matrix, chosen)


def repair_selection(matrix: CoverageMatrix, selection: Iterable[str]) -> List[str]:
    """
    Add tests for uncovered coverable features (best newly-covered/cost
    ratio, lowest index on ties), then prune. A selection that already
    covers is returned unchanged.
    """
    chosen = _mask(matrix, selection)
    uncovered = matrix.coverable_mask() & ~matrix.incidence[:, chosen].any(axis=1)
    added = greedy_fill(matrix, chosen, uncovered)
    if not added:
        return _ids(matrix, chosen)
    logger.info(f"[Verify] Repair added {added} test(s) to restore coverage")
    return prune_selection(matrix, _ids(matrix, chosen))
