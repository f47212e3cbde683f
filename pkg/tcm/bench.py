# tcm/bench.py
"""
Synthetic instances, solver timing/quality comparison, and the
improvement arithmetic used for Baseline vs TDD-guided reports.

Timing covers the solve call only (model construction excluded) and is
summarised by the median of the repetitions.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .model import Feature, TestCase, TestSuite, build_coverage_matrix
from .qubo import build_qubo, format_real
from .solvers import EXACT_MAX_VARIABLES, SOLVER_NAMES, AnnealParams, exact_solve, solve

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["instance", "solver", "n", "m", "median_ms", "best_energy", "optimum_found"]
OPTIMUM_TOLERANCE = 1e-9


class BenchmarkError(Exception):
    """Raised for infeasible instance specs and invalid benchmark requests."""
    pass


# ------------------------------
# Instance generation
# ------------------------------

class InstanceSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_tests: int = Field(..., ge=1)
    m_features: int = Field(..., ge=1)
    redundancy: float = Field(2.0, ge=1.0)  # average covering tests per feature
    single_label: bool = False
    cost_model: Literal["unit", "uniform"] = "unit"
    cost_low: float = Field(1.0, gt=0.0)
    cost_high: float = Field(5.0, gt=0.0)
    seed: int = Field(0, ge=0)
    name: Optional[str] = None

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        kind = "single" if self.single_label else "mixed"
        return f"n{self.n_tests}-m{self.m_features}-r{self.redundancy:g}-{kind}-s{self.seed}"

    @classmethod
    def cost_fields(cls, text: str) -> dict:
        """'unit' or 'uniform:<lo>:<hi>' -> InstanceSpec keyword arguments."""
        if text == "unit":
            return {"cost_model": "unit"}
        parts = text.split(":")
        if len(parts) == 3 and parts[0] == "uniform":
            try:
                return {"cost_model": "uniform", "cost_low": float(parts[1]), "cost_high": float(parts[2])}
            except ValueError:
                pass
        raise BenchmarkError(f"cost model must be 'unit' or 'uniform:<lo>:<hi>', got {text!r}")


def _feature_counts(spec: InstanceSpec, rng: np.random.Generator) -> List[int]:
    """floor(r) covering tests per feature, round(frac * m) of them get one more."""
    base = int(math.floor(spec.redundancy))
    n_up = int(round((spec.redundancy - base) * spec.m_features))
    counts = [base] * spec.m_features
    for j in rng.choice(spec.m_features, size=n_up, replace=False):
        counts[int(j)] += 1
    return counts


def _check_feasible(spec: InstanceSpec) -> None:
    n, m, r = spec.n_tests, spec.m_features, spec.redundancy
    if spec.cost_model == "uniform" and spec.cost_low > spec.cost_high:
        raise BenchmarkError(f"cost range is empty: {spec.cost_low} > {spec.cost_high}")
    if spec.single_label:
        if m > n:
            raise BenchmarkError(
                f"single-label instance needs n_tests >= m_features (got {n} tests for {m} features)"
            )
        return
    if math.ceil(r) > n:
        raise BenchmarkError(f"redundancy {r:g} needs at least {math.ceil(r)} tests (got {n})")
    slots = m * int(math.floor(r)) + int(round((r - math.floor(r)) * m))
    if slots < n:
        raise BenchmarkError(
            f"mixed-label instance needs round(redundancy * m_features) >= n_tests so every "
            f"test carries a label (got {slots} label slots for {n} tests)"
        )


def gen_instance(spec: InstanceSpec) -> TestSuite:
    """Deterministic given spec.seed; no feature is left uncoverable."""
    _check_feasible(spec)
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n_tests, spec.m_features
    labels: List[set] = [set() for _ in range(n)]

    if spec.single_label:
        # balanced partition: every feature gets floor(n/m) or ceil(n/m) tests
        for pos, i in enumerate(rng.permutation(n)):
            labels[int(i)].add(pos % m)
    else:
        counts = _feature_counts(spec, rng)
        slots = rng.permutation([j for j in range(m) for _ in range(counts[j])]).tolist()
        # first n slots give every test exactly one label
        for i, j in zip(rng.permutation(n).tolist(), slots[:n]):
            labels[i].add(j)
        for j in slots[n:]:
            free = [i for i in range(n) if j not in labels[i]]
            labels[free[int(rng.integers(len(free)))]].add(j)

    if spec.cost_model == "uniform":
        costs = [round(float(c), 3) for c in rng.uniform(spec.cost_low, spec.cost_high, size=n)]
    else:
        costs = [1.0] * n

    tests = tuple(
        TestCase(
            id=f"t{i + 1}",
            name=f"test {i + 1}",
            cost=costs[i],
            covers=tuple(f"f{j + 1}" for j in sorted(labels[i])),
        )
        for i in range(n)
    )
    features = tuple(Feature(id=f"f{j + 1}") for j in range(m))
    return TestSuite(tests=tests, features=features).check_integrity()


# ------------------------------
# Benchmark
# ------------------------------

class BenchRow(BaseModel):
    model_config = ConfigDict(frozen=True)

    instance: str
    solver: str
    n: int
    m: int
    median_wall_time: float  # seconds
    best_energy: float
    optimum_found: Optional[bool] = None  # None when no oracle was run
    repetitions: int = Field(..., ge=1)


def _bench_instance(
    spec: InstanceSpec,
    solvers: Sequence[str],
    repetitions: int,
    params: AnnealParams,
) -> List[BenchRow]:
    suite = gen_instance(spec)
    matrix = build_coverage_matrix(suite)
    model = build_qubo(matrix)
    optimum = exact_solve(model).energy if model.n <= EXACT_MAX_VARIABLES else None

    rows = []
    for name in solvers:
        if name == "exact" and model.n > EXACT_MAX_VARIABLES:
            logger.warning(f"[Bench] Skipping exact on {spec.label}: n={model.n} over the cap")
            continue
        times, energies = [], []
        for _ in range(repetitions):
            started = time.perf_counter()
            result = solve(name, model, matrix, params)
            times.append(time.perf_counter() - started)
            energies.append(result.energy)
        best = min(energies)
        rows.append(BenchRow(
            instance=spec.label,
            solver=name,
            n=matrix.n_tests,
            m=matrix.n_features,
            median_wall_time=statistics.median(times),
            best_energy=best,
            optimum_found=None if optimum is None else abs(best - optimum) <= OPTIMUM_TOLERANCE,
            repetitions=repetitions,
        ))
        logger.info(f"[Bench] {spec.label} {name}: median {rows[-1].median_wall_time * 1000:.2f} ms, best {best:g}")
    return rows


def run_benchmark(
    specs: Sequence[InstanceSpec],
    solvers: Sequence[str],
    repetitions: int,
    params: Optional[AnnealParams] = None,
    parallel: bool = False,
    timing: bool = True,
) -> Tuple[List[BenchRow], str]:
    """
    Time `repetitions` solves per (instance, solver). With `parallel`,
    distinct instances run concurrently; repetitions of one measurement never do.
    Returns the rows sorted by (instance, solver) and their CSV text.
    """
    if repetitions < 1:
        raise BenchmarkError(f"repetitions must be >= 1 (got {repetitions})")
    unknown = [s for s in solvers if s not in SOLVER_NAMES]
    if unknown:
        raise BenchmarkError(f"unknown solver(s): {', '.join(unknown)}")
    params = params or AnnealParams()

    if parallel and len(specs) > 1:
        with ThreadPoolExecutor(max_workers=len(specs)) as pool:
            batches = list(pool.map(lambda s: _bench_instance(s, solvers, repetitions, params), specs))
    else:
        batches = [_bench_instance(s, solvers, repetitions, params) for s in specs]

    rows = sorted((row for batch in batches for row in batch), key=lambda r: (r.instance, r.solver))
    return rows, render_csv(rows, timing=timing)


def render_csv(rows: Sequence[BenchRow], timing: bool = True) -> str:
    """CSV with CSV_COLUMNS; median_ms is left blank when timing is off."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        found = "" if row.optimum_found is None else str(row.optimum_found).lower()
        writer.writerow([
            row.instance,
            row.solver,
            row.n,
            row.m,
            f"{row.median_wall_time * 1000:.3f}" if timing else "",
            format_real(row.best_energy),
            found,
        ])
    return buf.getvalue()


# ------------------------------
# Reporting arithmetic
# ------------------------------

def improvement_percent(baseline: float, treated: float) -> float:
    """100 * (baseline - treated) / baseline, to one decimal place."""
    if not baseline > 0:
        raise BenchmarkError(f"baseline must be > 0 (got {baseline})")
    return round(100.0 * (baseline - treated) / baseline, 1)


def speedup_ratio(slow: float, fast: float) -> float:
    if not fast > 0:
        raise BenchmarkError(f"fast time must be > 0 (got {fast})")
    return slow / fast


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else f"{v:.2f}"


def format_comparison_table(rows: Sequence[Tuple[str, float, float]]) -> str:
    """Metric / Baseline / TDD / Improvement table, one line per metric."""
    lines = [f"{'Metric':<22}{'Baseline':>12}{'TDD':>12}{'Improvement':>14}"]
    for metric, baseline, treated in rows:
        try:
            gain = f"{improvement_percent(baseline, treated):.1f}%"
        except BenchmarkError:
            gain = "n/a"
        lines.append(f"{metric:<22}{_num(baseline):>12}{_num(treated):>12}{gain:>14}")
    return "\n".join(lines) + "\n"


def format_bench_table(rows: Sequence[BenchRow], timing: bool = True) -> str:
    lines = [f"{'instance':<32}{'solver':<8}{'n':>5}{'m':>5}{'median_ms':>12}{'best_energy':>14}  optimum"]
    for row in rows:
        ms = f"{row.median_wall_time * 1000:.3f}" if timing else "-"
        found = "-" if row.optimum_found is None else ("yes" if row.optimum_found else "no")
        lines.append(
            f"{row.instance:<32}{row.solver:<8}{row.n:>5}{row.m:>5}{ms:>12}{format_real(row.best_energy):>14}  {found}"
        )
    return "\n".join(lines) + "\n"
