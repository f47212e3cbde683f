"""Tests for the exact oracle, simulated annealing and greedy cover."""

from __future__ import annotations

import math

import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_suite
from tcm.model import Feature, TestSuite, build_coverage_matrix
from tcm.qubo import QuboConfig, QuboModel, build_qubo, energy
from tcm.solvers import (
    EXACT_MAX_VARIABLES,
    AnnealParams,
    SolverError,
    exact_set_cover,
    exact_solve,
    greedy_cover,
    simulated_annealing,
    solve,
)
from tcm.verify import check_coverage


def _model(suite, lam=None):
    matrix = build_coverage_matrix(suite)
    return matrix, build_qubo(matrix, QuboConfig(lambda_value=lam) if lam else None)


class TestExactSolve:
    def test_inst_a_tie_break(self, inst_a):
        _, model = _model(inst_a, lam=3.0)
        result = exact_solve(model)
        assert result.assignment == (0, 1, 0, 1, 0)
        assert result.energy == 2.0
        assert result.selected_ids(model.var_names) == ["t2", "t4"]

    def test_single_variable(self):
        _, model = _model(make_suite({"t1": ["f1"]}), lam=2.0)
        result = exact_solve(model)
        assert result.assignment == (1,)
        assert result.energy == 1.0

    def test_empty_model(self):
        result = exact_solve(QuboModel(n=0, linear=(), quadratic={}, offset=7.0))
        assert result.assignment == ()
        assert result.energy == 7.0

    def test_cap(self):
        model = QuboModel(n=EXACT_MAX_VARIABLES + 1, linear=(1.0,) * (EXACT_MAX_VARIABLES + 1), quadratic={})
        with pytest.raises(SolverError, match="sa"):
            exact_solve(model)

    def test_custom_cap(self, inst_a):
        _, model = _model(inst_a)
        with pytest.raises(SolverError):
            exact_solve(model, max_variables=4)

    def test_energy_consistent_with_assignment(self, suite_factory):
        rng = np.random.default_rng(4)
        for _ in range(10):
            _, model = _model(suite_factory(rng, n=9, m=4))
            result = exact_solve(model)
            assert abs(result.energy - energy(model, result.assignment)) <= 1e-9

    def test_spans_several_blocks(self):
        # 17 variables = two enumeration blocks; optimum sits in the second one
        n = 17
        linear = (-1.0,) + (1.0,) * (n - 2) + (-1.0,)
        result = exact_solve(QuboModel(n=n, linear=linear, quadratic={}))
        assert result.assignment == (1,) + (0,) * (n - 2) + (1,)
        assert result.energy == -2.0


class TestExactSetCover:
    def test_inst_a(self, inst_a):
        assert exact_set_cover(build_coverage_matrix(inst_a)) == ["t2", "t4"]

    def test_prefers_multi_label_test(self):
        # one test covering both beats the exactly-one optimum of two tests
        suite = make_suite(
            {"t1": ["f1", "f2"], "t2": ["f1"], "t3": ["f2"]},
            costs={"t1": 1.5, "t2": 1.0, "t3": 1.0},
        )
        assert exact_set_cover(build_coverage_matrix(suite)) == ["t1"]


class TestAnnealParams:
    def test_defaults(self):
        p = AnnealParams()
        assert (p.sweeps, p.t_init, p.t_final, p.restarts, p.seed, p.workers) == (2000, 10.0, 0.01, 8, 0, 1)

    @pytest.mark.parametrize("fields", [
        {"sweeps": 0},
        {"restarts": 0},
        {"t_init": 0.01, "t_final": 0.01},
        {"t_final": 0.0},
        {"seed": -1},
    ])
    def test_invalid(self, fields):
        with pytest.raises(ValidationError):
            AnnealParams(**fields)


class TestSimulatedAnnealing:
    def test_inst_a_reaches_optimum(self, inst_a):
        _, model = _model(inst_a)
        assert simulated_annealing(model, AnnealParams(seed=42)).energy == 2.0

    def test_single_feature(self, single_feature):
        _, model = _model(single_feature)
        result = simulated_annealing(model)
        assert result.energy == 1.0
        assert sum(result.assignment) == 1

    def test_deterministic(self, suite_factory):
        model = _model(suite_factory(np.random.default_rng(1), n=12, m=6))[1]
        params = AnnealParams(sweeps=200, restarts=4, seed=9)
        a = simulated_annealing(model, params)
        b = simulated_annealing(model, params)
        assert a.assignment == b.assignment
        assert a.energy == b.energy

    def test_workers_do_not_change_result(self, suite_factory):
        model = _model(suite_factory(np.random.default_rng(2), n=14, m=7))[1]
        serial = simulated_annealing(model, AnnealParams(sweeps=150, restarts=6, seed=3))
        threaded = simulated_annealing(model, AnnealParams(sweeps=150, restarts=6, seed=3, workers=3))
        assert serial.assignment == threaded.assignment
        assert serial.energy == threaded.energy

    def test_energy_matches_assignment(self, suite_factory):
        model = _model(suite_factory(np.random.default_rng(6), n=10, m=5))[1]
        result = simulated_annealing(model, AnnealParams(sweeps=100, restarts=2))
        assert abs(result.energy - energy(model, result.assignment)) <= 1e-9

    def test_stats(self, inst_a):
        _, model = _model(inst_a)
        result = simulated_annealing(model, AnnealParams(sweeps=50, restarts=3, seed=5))
        assert (result.stats.sweeps_or_steps, result.stats.restarts, result.stats.seed) == (50, 3, 5)
        assert result.stats.wall_time >= 0.0
        assert result.solver == "sa"

    def test_needs_a_variable(self):
        with pytest.raises(SolverError):
            simulated_annealing(QuboModel(n=0, linear=(), quadratic={}))


class TestGreedyCover:
    def test_inst_a(self, inst_a):
        matrix, model = _model(inst_a)
        result = greedy_cover(matrix, model)
        assert result.selected_ids(matrix.test_order) == ["t1", "t4"]
        assert check_coverage(matrix, ["t1", "t4"]).total_cost == 2.0
        assert result.stats.sweeps_or_steps == 2

    def test_ratio_prefers_cheaper(self):
        matrix = build_coverage_matrix(make_suite({"t1": ["f1"], "t2": ["f1"]}, costs={"t2": 0.5}))
        assert greedy_cover(matrix).selected_ids(matrix.test_order) == ["t2"]

    def test_no_features(self):
        matrix = build_coverage_matrix(make_suite({"t1": ["f1"]}, features=["f1"]))
        empty = type(matrix)((), matrix.test_order, matrix.incidence[:0], matrix.costs)
        result = greedy_cover(empty)
        assert result.assignment == (0,)
        assert result.energy == 0.0

    def test_uncoverable_rejected(self, inst_a):
        suite = TestSuite(tests=inst_a.tests, features=inst_a.features + (Feature(id="f4"),))
        with pytest.raises(SolverError, match="f4"):
            greedy_cover(build_coverage_matrix(suite))

    def test_bounded_by_log_factor(self, suite_factory):
        rng = np.random.default_rng(12)
        for _ in range(15):
            matrix = build_coverage_matrix(suite_factory(rng, n=10, m=5)).restrict_to_coverable()
            greedy = greedy_cover(matrix)
            chosen = greedy.selected_ids(matrix.test_order)
            report = check_coverage(matrix, chosen)
            assert report.uncovered == []
            optimum = check_coverage(matrix, exact_set_cover(matrix)).total_cost
            assert optimum - 1e-9 <= report.total_cost <= (1 + math.log(matrix.n_features)) * optimum + 1e-9


class TestDispatch:
    @pytest.mark.parametrize("name", ["exact", "sa", "greedy"])
    def test_named_solvers_agree_on_inst_a(self, inst_a, name):
        matrix, model = _model(inst_a)
        assert solve(name, model, matrix).energy == 2.0

    def test_unknown(self, inst_a):
        matrix, model = _model(inst_a)
        with pytest.raises(SolverError, match="unknown solver"):
            solve("tabu", model, matrix)

    def test_greedy_needs_matrix(self, inst_a):
        _, model = _model(inst_a)
        with pytest.raises(SolverError):
            solve("greedy", model)
