"""Tests for the suite records and the coverage matrix."""

from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_suite
from tcm.model import (
    Feature,
    SuiteValidationError,
    TestCase,
    TestSuite,
    build_coverage_matrix,
    uncoverable_features,
)


class TestRecords:
    def test_name_defaults_to_id(self):
        assert TestCase(id="t1", covers=("f1",)).name == "t1"

    def test_cost_defaults_to_one(self):
        assert TestCase(id="t1", covers=("f1",)).cost == 1.0

    def test_negative_cost_rejected(self):
        with pytest.raises(ValidationError):
            TestCase(id="t1", cost=-0.5, covers=("f1",))

    def test_infinite_cost_rejected(self):
        with pytest.raises(ValidationError):
            TestCase(id="t1", cost=float("inf"), covers=("f1",))

    def test_empty_covers_rejected(self):
        with pytest.raises(ValidationError):
            TestCase(id="t1", covers=())

    def test_duplicate_labels_collapse_in_order(self):
        assert TestCase(id="t1", covers=("f2", "f1", "f2")).covers == ("f2", "f1")

    def test_records_are_immutable(self):
        t = TestCase(id="t1", covers=("f1",))
        with pytest.raises(ValidationError):
            t.cost = 2.0


class TestSuiteIntegrity:
    def test_duplicate_test_id(self):
        suite = make_suite({"t1": ["f1"]})
        suite = TestSuite(tests=suite.tests * 2, features=suite.features)
        with pytest.raises(SuiteValidationError) as exc:
            suite.check_integrity()
        assert exc.value.offending_id == "t1"

    def test_duplicate_feature_id(self):
        suite = TestSuite(
            tests=(TestCase(id="t1", covers=("f1",)),),
            features=(Feature(id="f1"), Feature(id="f1")),
        )
        with pytest.raises(SuiteValidationError, match="f1"):
            suite.check_integrity()

    def test_dangling_reference_names_feature(self):
        suite = make_suite({"t1": ["f1", "fX"]}, features=["f1"])
        with pytest.raises(SuiteValidationError, match="fX") as exc:
            build_coverage_matrix(suite)
        assert exc.value.offending_id == "fX"

    def test_subset_keeps_declaration_order_and_features(self, inst_a):
        sub = inst_a.subset(["t4", "t2"])
        assert sub.test_ids == ["t2", "t4"]
        assert sub.feature_ids == ["f1", "f2", "f3"]

    def test_subset_unknown_id(self, inst_a):
        with pytest.raises(SuiteValidationError, match="tX"):
            inst_a.subset(["t1", "tX"])

    def test_get(self, inst_a):
        assert inst_a.get("t4").covers == ("f2", "f3")
        with pytest.raises(KeyError):
            inst_a.get("t9")


class TestCoverageMatrix:
    def test_inst_a_incidence(self, inst_a):
        m = build_coverage_matrix(inst_a)
        assert m.shape == (3, 5)
        assert m.feature_order == ("f1", "f2", "f3")
        assert m.test_order == ("t1", "t2", "t3", "t4", "t5")
        assert m.incidence[1].astype(int).tolist() == [0, 0, 1, 1, 0]
        assert m.costs.tolist() == [1.0] * 5

    def test_empty_suite(self):
        m = build_coverage_matrix(TestSuite())
        assert m.shape == (0, 0)
        assert uncoverable_features(m) == []

    def test_arrays_are_read_only(self, inst_a):
        m = build_coverage_matrix(inst_a)
        with pytest.raises(ValueError):
            m.incidence[0, 0] = False
        with pytest.raises(ValueError):
            m.costs[0] = 9.0

    def test_covers_reconstructed_from_columns(self, suite_factory):
        rng = np.random.default_rng(11)
        for _ in range(20):
            suite = suite_factory(rng, n=8, m=5)
            m = build_coverage_matrix(suite)
            for t in suite.tests:
                assert set(m.covers_of(t.id)) == set(t.covers)

    def test_covering_sets(self, inst_a):
        assert build_coverage_matrix(inst_a).covering_sets() == [[0, 1], [2, 3], [3, 4]]

    def test_uncoverable_feature_reported(self, inst_a):
        suite = TestSuite(tests=inst_a.tests, features=inst_a.features + (Feature(id="f4"),))
        m = build_coverage_matrix(suite)
        assert uncoverable_features(m) == ["f4"]
        restricted = m.restrict_to_coverable()
        assert restricted.feature_order == ("f1", "f2", "f3")
        assert restricted.test_order == m.test_order

    def test_inst_a_has_no_uncoverable(self, inst_a):
        assert uncoverable_features(build_coverage_matrix(inst_a)) == []

    def test_uncoverable_matches_zero_rows(self, suite_factory):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = build_coverage_matrix(suite_factory(rng, n=4, m=8, single_label=True))
            zero_rows = [fid for fid, row in zip(m.feature_order, m.incidence) if row.sum() == 0]
            assert uncoverable_features(m) == zero_rows

    def test_equality(self, inst_a):
        assert build_coverage_matrix(inst_a) == build_coverage_matrix(inst_a)
        other = make_suite({"t1": ["f1"]})
        assert build_coverage_matrix(inst_a) != build_coverage_matrix(other)
