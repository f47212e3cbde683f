# tcm/qubo.py
"""
QUBO construction for test-suite minimization.

Objective realized by build_qubo:

    E(x) = sum_i cost_i * x_i + lam * sum_j (1 - sum_{i in S_j} x_i)^2

expanded with x^2 = x into a constant offset, a linear vector and an
upper-triangular quadratic map. The per-feature penalty is the exactly-one
form; with lam above every test cost it makes full coverage the cheapest
choice on single-label suites.

Exchange format (export_qubo / import_qubo):

    # qubo n=<n> offset=<offset>
    i i <linear>       one line per nonzero linear term, ascending i
    i j <quadratic>    one line per quadratic term, ascending (i, j)
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .model import CoverageMatrix, uncoverable_features

logger = logging.getLogger(__name__)

Assignment = Tuple[int, ...]

DEFAULT_LAMBDA_MULTIPLIER = 2.0
LAMBDA_FLOOR = 1.0


class QuboError(Exception):
    """Raised when a QUBO cannot be built or evaluated."""
    pass


class QuboFormatError(QuboError):
    """Raised for malformed exchange text. `line` is 1-based."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


# ------------------------------
# Model
# ------------------------------

@dataclass(frozen=True)
class QuboModel:
    n: int
    linear: Tuple[float, ...]
    quadratic: Dict[Tuple[int, int], float]
    offset: float = 0.0
    # var_names and metadata are not part of the exchange format, so they
    # do not take part in equality either.
    var_names: Tuple[str, ...] = field(default=(), compare=False)
    lam: Optional[float] = field(default=None, compare=False)
    skipped_features: Tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.linear) != self.n:
            raise QuboError(f"linear has {len(self.linear)} terms, expected {self.n}")
        if self.var_names and len(self.var_names) != self.n:
            raise QuboError(f"var_names has {len(self.var_names)} entries, expected {self.n}")
        for (i, j), q in self.quadratic.items():
            if not (0 <= i < j < self.n):
                raise QuboError(f"bad quadratic key ({i}, {j}) for n={self.n}")
            if q == 0.0:
                raise QuboError(f"zero coefficient stored at ({i}, {j})")
        if not self.var_names:
            object.__setattr__(self, "var_names", tuple(f"x{i}" for i in range(self.n)))

    @cached_property
    def neighbours(self) -> List[List[Tuple[int, float]]]:
        """Symmetric adjacency view: neighbours[i] = [(j, Q_ij), ...]."""
        adj: List[List[Tuple[int, float]]] = [[] for _ in range(self.n)]
        for (i, j), q in sorted(self.quadratic.items()):
            adj[i].append((j, q))
            adj[j].append((i, q))
        return adj

    @cached_property
    def upper(self) -> np.ndarray:
        """Dense strictly-upper-triangular Q, for vectorised evaluation."""
        mat = np.zeros((self.n, self.n), dtype=float)
        for (i, j), q in self.quadratic.items():
            mat[i, j] = q
        mat.setflags(write=False)
        return mat

    @cached_property
    def linear_array(self) -> np.ndarray:
        arr = np.asarray(self.linear, dtype=float)
        arr.setflags(write=False)
        return arr

    def energies(self, bits: np.ndarray) -> np.ndarray:
        """Energies of a (k, n) 0/1 matrix of assignments."""
        x = np.asarray(bits, dtype=float)
        return self.offset + x @ self.linear_array + np.einsum("ki,ki->k", x @ self.upper, x)


class QuboConfig(BaseModel):
    """How lam is chosen. An explicit lambda_value wins over the multiplier."""
    model_config = ConfigDict(frozen=True)

    lambda_value: Optional[float] = Field(None, gt=0.0)
    lambda_multiplier: float = Field(DEFAULT_LAMBDA_MULTIPLIER, gt=1.0)
    exclude_uncoverable: bool = True

    @model_validator(mode="after")
    def _finite(self):
        if self.lambda_value is not None and not math.isfinite(self.lambda_value):
            raise ValueError("lambda_value must be finite")
        return self

    @property
    def lambda_mode(self) -> str:
        return "explicit" if self.lambda_value is not None else "auto"

    def resolve_lambda(self, costs: Sequence[float]) -> float:
        if self.lambda_value is not None:
            return float(self.lambda_value)
        return auto_lambda(costs, self.lambda_multiplier)


# ------------------------------
# Construction
# ------------------------------

def auto_lambda(costs: Sequence[float], multiplier: float = DEFAULT_LAMBDA_MULTIPLIER) -> float:
    """max(multiplier * max(costs), 1.0): above the saving from dropping any one test."""
    costs = list(costs)
    if not costs:
        raise QuboError("no tests")
    if not multiplier > 1.0:
        raise QuboError(f"lambda multiplier must be > 1, got {multiplier}")
    return max(multiplier * max(float(c) for c in costs), LAMBDA_FLOOR)


def build_qubo(matrix: CoverageMatrix, config: Optional[QuboConfig] = None) -> QuboModel:
    """Expand cost + lam * exactly-one penalties into (linear, quadratic, offset)."""
    config = config or QuboConfig()
    lam = config.resolve_lambda(matrix.costs.tolist())

    skipped = uncoverable_features(matrix)
    if skipped and not config.exclude_uncoverable:
        raise QuboError(f"uncoverable features: {', '.join(skipped)}")
    if skipped:
        logger.warning(f"[QUBO] Skipping {len(skipped)} uncoverable feature(s): {', '.join(skipped)}")

    n = matrix.n_tests
    linear = [float(c) for c in matrix.costs]
    quadratic: Dict[Tuple[int, int], float] = {}
    offset = 0.0

    for members in matrix.covering_sets():
        if not members:
            continue
        offset += lam
        for a, i in enumerate(members):
            linear[i] -= lam
            for k in members[a + 1:]:
                quadratic[(i, k)] = quadratic.get((i, k), 0.0) + 2.0 * lam

    quadratic = {key: q for key, q in sorted(quadratic.items()) if q != 0.0}
    logger.debug(f"[QUBO] Built model n={n} terms={len(quadratic)} lam={lam:g}")
    return QuboModel(
        n=n,
        linear=tuple(linear),
        quadratic=quadratic,
        offset=offset,
        var_names=tuple(matrix.test_order),
        lam=lam,
        skipped_features=tuple(skipped),
    )


# ------------------------------
# Evaluation
# ------------------------------

def _check_length(model: QuboModel, x: Sequence[int]) -> None:
    if len(x) != model.n:
        raise QuboError(f"assignment has {len(x)} bits, model has {model.n} variables")


def energy(model: QuboModel, x: Sequence[int]) -> float:
    _check_length(model, x)
    total = model.offset
    for i, li in enumerate(model.linear):
        if x[i]:
            total += li
    for (i, j), q in model.quadratic.items():
        if x[i] and x[j]:
            total += q
    return float(total)


def flip_delta(model: QuboModel, x: Sequence[int], i: int) -> float:
    """E(x with bit i flipped) - E(x), in O(degree of i)."""
    _check_length(model, x)
    if not (0 <= i < model.n):
        raise QuboError(f"index {i} out of range for n={model.n}")
    field_i = model.linear[i]
    for j, q in model.neighbours[i]:
        if x[j]:
            field_i += q
    return float((1 - 2 * int(bool(x[i]))) * field_i)


# ------------------------------
# Exchange format
# ------------------------------

_HEADER_RE = re.compile(r"^#\s*qubo\s+n=(\S+)\s+offset=(\S+)\s*$")


def format_real(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def export_qubo(model: QuboModel) -> str:
    lines = [f"# qubo n={model.n} offset={format_real(model.offset)}"]
    for i, li in enumerate(model.linear):
        if li != 0.0:
            lines.append(f"{i} {i} {format_real(li)}")
    for (i, j), q in sorted(model.quadratic.items()):
        lines.append(f"{i} {j} {format_real(q)}")
    return "\n".join(lines) + "\n"


def _parse_real(token: str, line_no: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise QuboFormatError(f"not a number: {token!r}", line_no) from None
    if not math.isfinite(value):
        raise QuboFormatError(f"non-finite value: {token!r}", line_no)
    return value


def import_qubo(text: str, var_names: Optional[Sequence[str]] = None) -> QuboModel:
    """Inverse of export_qubo. Blank lines are ignored."""
    lines = text.splitlines()
    numbered = [(no, ln.strip()) for no, ln in enumerate(lines, start=1) if ln.strip()]
    if not numbered:
        raise QuboFormatError("missing header", 1)

    header_no, header = numbered[0]
    m = _HEADER_RE.match(header)
    if not m:
        raise QuboFormatError("expected '# qubo n=<n> offset=<offset>' header", header_no)
    try:
        n = int(m.group(1))
    except ValueError:
        raise QuboFormatError(f"bad variable count {m.group(1)!r}", header_no) from None
    if n < 0:
        raise QuboFormatError(f"negative variable count {n}", header_no)
    offset = _parse_real(m.group(2), header_no)

    linear = [0.0] * n
    quadratic: Dict[Tuple[int, int], float] = {}
    seen = set()

    for line_no, ln in numbered[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise QuboFormatError(f"expected 'i j value', got {ln!r}", line_no)
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise QuboFormatError(f"bad index in {ln!r}", line_no) from None
        value = _parse_real(parts[2], line_no)
        if i > j:
            raise QuboFormatError("indices not ascending", line_no)
        if i < 0 or j >= n:
            raise QuboFormatError(f"index out of range for n={n}", line_no)
        if (i, j) in seen:
            raise QuboFormatError(f"duplicate coefficient ({i}, {j})", line_no)
        seen.add((i, j))
        if i == j:
            linear[i] = value
        elif value != 0.0:
            quadratic[(i, j)] = value

    return QuboModel(
        n=n,
        linear=tuple(linear),
        quadratic=quadratic,
        offset=offset,
        var_names=tuple(var_names) if var_names else (),
    )
