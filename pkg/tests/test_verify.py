"""Tests for coverage reports, cost accounting, gap reports and repair."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import make_suite
from tcm.model import Feature, TestSuite, build_coverage_matrix
from tcm.verify import (
    CoverageError,
    check_coverage,
    gap_report,
    prune_selection,
    repair_selection,
    selection_cost,
)


@pytest.fixture
def matrix_a(inst_a):
    return build_coverage_matrix(inst_a)


class TestCheckCoverage:
    def test_partial(self, matrix_a):
        report = check_coverage(matrix_a, {"t4"})
        assert report.covered == ["f2", "f3"]
        assert report.uncovered == ["f1"]
        assert report.removable == []
        assert not report.complete

    def test_empty_selection(self, matrix_a):
        report = check_coverage(matrix_a, set())
        assert report.uncovered == ["f1", "f2", "f3"]
        assert report.selected == []
        assert report.total_cost == 0.0

    def test_removable_is_judged_per_test(self, matrix_a):
        report = check_coverage(matrix_a, {"t1", "t3", "t4", "t5"})
        assert report.complete
        assert report.covered == ["f1", "f2", "f3"]
        # t3 and t5 duplicate t4; t4 is also removable on its own since t3 and t5 stay
        assert {"t3", "t5"} <= set(report.removable)
        assert report.removable == ["t3", "t4", "t5"]
        assert "t1" not in report.removable

    def test_single_removals_keep_coverage(self, suite_factory):
        rng = np.random.default_rng(17)
        for _ in range(30):
            matrix = build_coverage_matrix(suite_factory(rng, n=8, m=5))
            chosen = [tid for tid in matrix.test_order if rng.random() < 0.6]
            report = check_coverage(matrix, chosen)
            for tid in report.removable:
                rest = [t for t in chosen if t != tid]
                assert check_coverage(matrix, rest).covered == report.covered

    def test_partition(self, suite_factory):
        rng = np.random.default_rng(2)
        for _ in range(20):
            matrix = build_coverage_matrix(suite_factory(rng, n=6, m=6))
            chosen = [tid for tid in matrix.test_order if rng.random() < 0.5]
            report = check_coverage(matrix, chosen)
            assert set(report.covered).isdisjoint(report.uncovered)
            assert set(report.covered) | set(report.uncovered) == set(matrix.feature_order)

    def test_selection_follows_test_order(self, matrix_a):
        assert check_coverage(matrix_a, ["t4", "t2"]).selected == ["t2", "t4"]

    def test_unknown_id(self, matrix_a):
        with pytest.raises(CoverageError, match="tX"):
            check_coverage(matrix_a, {"t1", "tX"})

    def test_uncoverable_does_not_block_completeness(self, inst_a):
        suite = TestSuite(tests=inst_a.tests, features=inst_a.features + (Feature(id="f4"),))
        report = check_coverage(build_coverage_matrix(suite), {"t2", "t4"})
        assert report.uncovered == ["f4"]
        assert report.uncoverable == ["f4"]
        assert report.complete

    def test_document_is_plain_data(self, matrix_a):
        doc = check_coverage(matrix_a, {"t2", "t4"}).to_document()
        assert doc["selected"] == ["t2", "t4"]
        assert doc["total_cost"] == 2.0


class TestSelectionCost:
    def test_inst_a(self, matrix_a):
        assert selection_cost(matrix_a, {"t2", "t4"}) == 2.0

    def test_empty(self, matrix_a):
        assert selection_cost(matrix_a, set()) == 0.0

    def test_weighted(self):
        matrix = build_coverage_matrix(make_suite({"t1": ["f1"], "t2": ["f1"]}, costs={"t1": 0.5, "t2": 3.0}))
        assert selection_cost(matrix, {"t1", "t2"}) == 3.5

    def test_unknown_id(self, matrix_a):
        with pytest.raises(CoverageError):
            selection_cost(matrix_a, {"t9"})


class TestGapReport:
    def test_identical_optimal(self, matrix_a):
        gap = gap_report(matrix_a, {"t2", "t4"}, {"t2", "t4"})
        assert (gap.qubo_cost, gap.oracle_cost, gap.relative_gap) == (2.0, 2.0, 0.0)

    def test_half_gap(self, matrix_a):
        gap = gap_report(matrix_a, {"t1", "t3", "t5"}, {"t2", "t4"})
        assert gap.relative_gap == 0.5

    def test_incomplete_selection(self, matrix_a):
        with pytest.raises(CoverageError, match="f1"):
            gap_report(matrix_a, {"t4"}, {"t2", "t4"})

    def test_zero_cost_oracle(self):
        matrix = build_coverage_matrix(make_suite({"t1": ["f1"]}, costs={"t1": 0.0}))
        assert gap_report(matrix, {"t1"}, {"t1"}).relative_gap == 0.0


class TestRepair:
    def test_prune_forward(self, matrix_a):
        assert prune_selection(matrix_a, {"t1", "t3", "t4", "t5"}) == ["t1", "t4"]

    def test_prune_keeps_coverage(self, suite_factory):
        rng = np.random.default_rng(30)
        for _ in range(30):
            matrix = build_coverage_matrix(suite_factory(rng, n=8, m=5))
            chosen = [tid for tid in matrix.test_order if rng.random() < 0.7]
            before = check_coverage(matrix, chosen).covered
            pruned = prune_selection(matrix, chosen)
            after = check_coverage(matrix, pruned)
            assert after.covered == before
            assert after.removable == []

    def test_repair_fills_gap(self, matrix_a):
        assert repair_selection(matrix_a, {"t4"}) == ["t1", "t4"]

    def test_complete_selection_unchanged(self, matrix_a):
        assert repair_selection(matrix_a, {"t1", "t3", "t4"}) == ["t1", "t3", "t4"]

    def test_repair_always_completes(self, suite_factory):
        rng = np.random.default_rng(31)
        for _ in range(30):
            matrix = build_coverage_matrix(suite_factory(rng, n=8, m=6))
            chosen = [tid for tid in matrix.test_order if rng.random() < 0.3]
            assert check_coverage(matrix, repair_selection(matrix, chosen)).complete
