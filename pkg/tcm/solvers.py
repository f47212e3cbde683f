# tcm/solvers.py
"""
QUBO minimizers behind one result contract:

- exact_solve: enumeration oracle (ties -> lexicographically smallest bits)
- simulated_annealing: seeded restarts, fixed sweep order, geometric cooling
- greedy_cover: weighted greedy set cover, scored against the QUBO

plus exact_set_cover, the true set-cover optimum used for gap reports.
"""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model import CoverageMatrix, uncoverable_features
from .qubo import Assignment, QuboConfig, QuboModel, build_qubo, energy
from .verify import greedy_fill

logger = logging.getLogger(__name__)

EXACT_MAX_VARIABLES = 24
SOLVER_NAMES = ("exact", "sa", "greedy")

# Energies closer than this are treated as ties.
TIE_TOLERANCE = 1e-9

# Rows per enumeration block (2**16 assignments at a time).
_CHUNK_BITS = 16


class SolverError(Exception):
    """Raised when a solver cannot run on the given input."""
    pass


# ------------------------------
# Results and parameters
# ------------------------------

@dataclass(frozen=True)
class SolveStats:
    wall_time: float = 0.0
    sweeps_or_steps: int = 0
    restarts: int = 0
    seed: int = 0


@dataclass(frozen=True)
class SolveResult:
    assignment: Assignment
    energy: float
    stats: SolveStats = field(default_factory=SolveStats)
    solver: str = ""

    def selected_indices(self) -> List[int]:
        return [i for i, bit in enumerate(self.assignment) if bit]

    def selected_ids(self, names) -> List[str]:
        return [names[i] for i in self.selected_indices()]

    def to_document(self, timing: bool = True) -> Dict[str, Any]:
        stats = {
            "sweeps_or_steps": self.stats.sweeps_or_steps,
            "restarts": self.stats.restarts,
            "seed": self.stats.seed,
        }
        if timing:
            stats["wall_time"] = self.stats.wall_time
        return {"name": self.solver, "energy": self.energy, "stats": stats}


class AnnealParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    sweeps: int = Field(2000, ge=1)
    t_init: float = Field(10.0, gt=0.0)
    t_final: float = Field(0.01, gt=0.0)
    restarts: int = Field(8, ge=1)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)  # restarts run in a thread pool when > 1

    @model_validator(mode="after")
    def _cooling(self):
        if not self.t_init > self.t_final:
            raise ValueError(f"t_init ({self.t_init}) must exceed t_final ({self.t_final})")
        return self


# ------------------------------
# Exact enumeration
# ------------------------------

def _assignment_blocks(n: int) -> Iterator[np.ndarray]:
    """All 2**n assignments in lexicographic order (x0 most significant)."""
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    total = 1 << n
    step = 1 << min(n, _CHUNK_BITS)
    for start in range(0, total, step):
        ks = np.arange(start, min(start + step, total), dtype=np.int64)
        yield ((ks[:, None] >> shifts) & 1).astype(np.int8)


def _check_cap(n: int, max_variables: int, what: str) -> None:
    if n > max_variables:
        raise SolverError(
            f"{what} is capped at {max_variables} variables (got {n}); "
            f"use simulated annealing ('sa') for larger suites"
        )


def exact_solve(model: QuboModel, max_variables: int = EXACT_MAX_VARIABLES) -> SolveResult:
    """Global minimum by full enumeration."""
    _check_cap(model.n, max_variables, "exact_solve")
    started = time.perf_counter()

    best_energy = math.inf
    best_bits: Optional[np.ndarray] = None
    for block in _assignment_blocks(model.n):
        energies = model.energies(block)
        low = float(energies.min())
        if low < best_energy - TIE_TOLERANCE:
            idx = int(np.flatnonzero(energies <= low + TIE_TOLERANCE)[0])
            best_energy = float(energies[idx])
            best_bits = block[idx]

    assignment = tuple(int(b) for b in best_bits)
    elapsed = time.perf_counter() - started
    logger.debug(f"[Solver] exact n={model.n} energy={best_energy:g} in {elapsed * 1000:.1f} ms")
    return SolveResult(
        assignment=assignment,
        energy=energy(model, assignment),
        stats=SolveStats(wall_time=elapsed, sweeps_or_steps=1 << model.n),
        solver="exact",
    )


def exact_set_cover(matrix: CoverageMatrix, max_variables: int = EXACT_MAX_VARIABLES) -> List[str]:
    """Minimum-cost selection covering every coverable feature (lexicographic ties)."""
    _check_cap(matrix.n_tests, max_variables, "exact_set_cover")
    coverable = matrix.coverable_mask()
    rows = matrix.incidence[coverable].T.astype(np.int16)  # (n, r)
    costs = np.asarray(matrix.costs, dtype=float)

    best_cost = math.inf
    best_bits: Optional[np.ndarray] = None
    for block in _assignment_blocks(matrix.n_tests):
        feasible = ((block.astype(np.int16) @ rows) > 0).all(axis=1)
        if not feasible.any():
            continue
        total = np.where(feasible, block @ costs, np.inf)
        low = float(total.min())
        if low < best_cost - TIE_TOLERANCE:
            idx = int(np.flatnonzero(total <= low + TIE_TOLERANCE)[0])
            best_cost = float(total[idx])
            best_bits = block[idx]

    return [matrix.test_order[i] for i in np.flatnonzero(best_bits)]


# ------------------------------
# Simulated annealing
# ------------------------------

def restart_rng(seed: int, restart: int) -> np.random.Generator:
    """Per-restart stream: SeedSequence mixes (seed, restart) into the entropy pool."""
    return np.random.default_rng(np.random.SeedSequence([seed, restart]))


def _anneal_once(model: QuboModel, params: AnnealParams, restart: int) -> Tuple[float, Assignment]:
    rng = restart_rng(params.seed, restart)
    n = model.n
    neighbours = model.neighbours
    x = [int(b) for b in rng.integers(0, 2, size=n)]

    # local field h[i] = L[i] + sum_j Q~[i][j] * x[j]; flip delta is (1 - 2x_i) * h[i]
    h = list(model.linear)
    for i in range(n):
        if x[i]:
            for j, q in neighbours[i]:
                h[j] += q

    current = energy(model, x)
    best = current
    best_x = tuple(x)

    temperatures = np.geomspace(params.t_init, params.t_final, params.sweeps).tolist()
    for temperature in temperatures:
        draws = rng.random(n).tolist()
        for i in range(n):
            delta = -h[i] if x[i] else h[i]
            if delta <= 0.0 or draws[i] < math.exp(-delta / temperature):
                if x[i]:
                    x[i] = 0
                    for j, q in neighbours[i]:
                        h[j] -= q
                else:
                    x[i] = 1
                    for j, q in neighbours[i]:
                        h[j] += q
                current += delta
                if current < best - 1e-12:
                    best = current
                    best_x = tuple(x)

    return energy(model, best_x), best_x


def simulated_annealing(model: QuboModel, params: Optional[AnnealParams] = None) -> SolveResult:
    """Best assignment over all restarts; reproducible given (model, params)."""
    params = params or AnnealParams()
    if model.n < 1:
        raise SolverError("simulated annealing needs at least one variable")
    started = time.perf_counter()

    restarts = range(params.restarts)
    if params.workers > 1:
        with ThreadPoolExecutor(max_workers=params.workers) as pool:
            outcomes = list(pool.map(lambda r: _anneal_once(model, params, r), restarts))
    else:
        outcomes = [_anneal_once(model, params, r) for r in restarts]

    # merge in restart order; first restart wins ties
    best_energy, best_x = outcomes[0]
    for e, xs in outcomes[1:]:
        if e < best_energy - TIE_TOLERANCE:
            best_energy, best_x = e, xs

    elapsed = time.perf_counter() - started
    logger.debug(
        f"[Solver] sa n={model.n} sweeps={params.sweeps} restarts={params.restarts} "
        f"seed={params.seed} energy={best_energy:g} in {elapsed * 1000:.1f} ms"
    )
    return SolveResult(
        assignment=best_x,
        energy=best_energy,
        stats=SolveStats(
            wall_time=elapsed,
            sweeps_or_steps=params.sweeps,
            restarts=params.restarts,
            seed=params.seed,
        ),
        solver="sa",
    )


# ------------------------------
# Greedy set cover
# ------------------------------

def _empty_model() -> QuboModel:
    return QuboModel(n=0, linear=(), quadratic={})


def greedy_cover(
    matrix: CoverageMatrix,
    model: Optional[QuboModel] = None,
    config: Optional[QuboConfig] = None,
) -> SolveResult:
    """
    Repeatedly pick the test with the best (newly covered)/cost ratio,
    lowest index on ties. Zero-cost tests that cover something rank first.
    """
    missing = uncoverable_features(matrix)
    if missing:
        raise SolverError(f"greedy cover needs coverable features; uncoverable: {', '.join(missing)}")
    if model is None:
        model = build_qubo(matrix, config) if matrix.n_tests else _empty_model()
    started = time.perf_counter()

    chosen = np.zeros(matrix.n_tests, dtype=bool)
    steps = greedy_fill(matrix, chosen, np.ones(matrix.n_features, dtype=bool))

    assignment = tuple(int(b) for b in chosen)
    elapsed = time.perf_counter() - started
    return SolveResult(
        assignment=assignment,
        energy=energy(model, assignment),
        stats=SolveStats(wall_time=elapsed, sweeps_or_steps=steps),
        solver="greedy",
    )


# ------------------------------
# Dispatch
# ------------------------------

def solve(
    name: str,
    model: QuboModel,
    matrix: Optional[CoverageMatrix] = None,
    params: Optional[AnnealParams] = None,
) -> SolveResult:
    """Run the named solver ('exact', 'sa' or 'greedy')."""
    if name == "exact":
        return exact_solve(model)
    if name == "sa":
        return simulated_annealing(model, params)
    if name == "greedy":
        if matrix is None:
            raise SolverError("greedy needs the coverage matrix")
        return greedy_cover(matrix.restrict_to_coverable(), model)
    raise SolverError(f"unknown solver {name!r}; choose one of {', '.join(SOLVER_NAMES)}")
