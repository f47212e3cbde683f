# tcm/cli.py
"""
Command-line surface: minimize, verify, export-qubo, bench, gen-instance, pipeline.

Exit codes: 0 success, 1 usage or input error, 2 the optimizer left
coverable features uncovered. Structured output goes to --output or
stdout; diagnostics go to stderr through logging.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .bench import (
    BenchmarkError,
    InstanceSpec,
    format_bench_table,
    format_comparison_table,
    gen_instance,
    run_benchmark,
)
from .config import setup_logging
from .ingest import DocumentError, dump_document, emit_suite, parse_suite
from .llm import (
    CompletionError,
    HttpCompletionClient,
    IncompleteCoverageError,
    MockCompletionClient,
    PipelineConfig,
    PipelineError,
    run_pipeline,
)
from .model import CoverageMatrix, SuiteValidationError, TestSuite, build_coverage_matrix
from .qubo import DEFAULT_LAMBDA_MULTIPLIER, QuboConfig, QuboError, build_qubo, energy, export_qubo, format_real
from .solvers import EXACT_MAX_VARIABLES, SOLVER_NAMES, AnnealParams, SolverError, exact_set_cover, solve
from .verify import CoverageError, CoverageReport, GapReport, check_coverage, gap_report, repair_selection

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_INCOMPLETE = 2

SELECTION_SCHEMA_VERSION = 1

_INPUT_ERRORS = (
    OSError,
    DocumentError,
    SuiteValidationError,
    QuboError,
    SolverError,
    CoverageError,
    BenchmarkError,
    CompletionError,
    ValidationError,
)


class CliUsageError(Exception):
    """Raised instead of argparse's exit so usage errors map to exit code 1."""
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliUsageError(message)


class CliConfig(BaseModel):
    """Global flags shared by every command."""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(0, ge=0)
    lambda_value: Optional[float] = None
    lambda_multiplier: Optional[float] = None
    solver: Literal["sa", "exact", "greedy"] = "sa"
    sweeps: Optional[int] = None
    restarts: Optional[int] = None
    workers: Optional[int] = None
    output: Optional[Path] = None
    format: Literal["text", "document"] = "document"
    timing: bool = True

    @model_validator(mode="after")
    def _one_lambda(self):
        if self.lambda_value is not None and self.lambda_multiplier is not None:
            raise ValueError("--lambda and --lambda-multiplier are mutually exclusive")
        return self

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "CliConfig":
        return cls(
            seed=args.seed,
            lambda_value=args.lambda_value,
            lambda_multiplier=args.lambda_multiplier,
            solver=args.solver,
            sweeps=args.sweeps,
            restarts=args.restarts,
            workers=args.workers,
            output=args.output,
            format=args.format,
            timing=not args.no_timing,
        )

    def qubo_config(self) -> QuboConfig:
        return QuboConfig(
            lambda_value=self.lambda_value,
            lambda_multiplier=self.lambda_multiplier or DEFAULT_LAMBDA_MULTIPLIER,
        )

    def anneal_params(self) -> AnnealParams:
        given = {"sweeps": self.sweeps, "restarts": self.restarts, "workers": self.workers}
        return AnnealParams(seed=self.seed, **{k: v for k, v in given.items() if v is not None})


# ------------------------------
# Helpers
# ------------------------------

def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot read {path}: {e.strerror or e}") from None


def _load_suite(path: Path) -> TestSuite:
    try:
        return parse_suite(_read_text(path))
    except DocumentError as e:
        raise DocumentError(f"{path}: {e}") from None


def _emit(text: str, cfg: CliConfig) -> None:
    if cfg.output is not None:
        cfg.output.parent.mkdir(parents=True, exist_ok=True)
        cfg.output.write_text(text, encoding="utf-8")
        logger.info(f"[CLI] Wrote {cfg.output}")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def _report_lines(report: CoverageReport) -> List[str]:
    return [
        f"selected:    {', '.join(report.selected) or '-'}",
        f"total cost:  {format_real(report.total_cost)}",
        f"covered:     {', '.join(report.covered) or '-'}",
        f"uncovered:   {', '.join(report.uncovered) or '-'}",
        f"uncoverable: {', '.join(report.uncoverable) or '-'}",
        f"removable:   {', '.join(report.removable) or '-'}",
    ]


def _coverage_exit(report: CoverageReport) -> int:
    if report.complete:
        return EXIT_OK
    missing = sorted(set(report.uncovered) - set(report.uncoverable))
    logger.error(f"[CLI] Coverable features left uncovered: {', '.join(missing)}")
    return EXIT_INCOMPLETE


# ------------------------------
# Commands
# ------------------------------

def cmd_minimize(args: argparse.Namespace, cfg: CliConfig) -> int:
    suite = _load_suite(args.suite)
    matrix = build_coverage_matrix(suite)
    model = build_qubo(matrix, cfg.qubo_config())
    result = solve(cfg.solver, model, matrix, cfg.anneal_params())

    selected = result.selected_ids(matrix.test_order)
    if args.repair:
        selected = repair_selection(matrix, selected)
    report = check_coverage(matrix, selected)
    chosen = set(report.selected)
    final_energy = energy(model, [1 if tid in chosen else 0 for tid in matrix.test_order])
    gap = _oracle_gap(matrix, report)

    if cfg.format == "document":
        doc: Dict[str, Any] = {
            "schema_version": SELECTION_SCHEMA_VERSION,
            "selected": report.selected,
            "energy": final_energy,
            "total_cost": report.total_cost,
            "lambda": model.lam,
            "coverage": report.to_document(),
            "solver": result.to_document(timing=cfg.timing),
            "gap": gap.model_dump() if gap is not None else None,
        }
        _emit(dump_document(doc), cfg)
    else:
        lines = [f"solver:      {result.solver}", f"energy:      {format_real(final_energy)}"]
        if gap is not None:
            lines.append(f"oracle gap:  {gap.relative_gap:.3f} (oracle cost {format_real(gap.oracle_cost)})")
        _emit("\n".join(lines + _report_lines(report)) + "\n", cfg)
    return _coverage_exit(report)


def _oracle_gap(matrix: CoverageMatrix, report: CoverageReport) -> Optional[GapReport]:
    """Gap to the true set-cover optimum; None when incomplete or too large to enumerate."""
    if not report.complete or matrix.n_tests > EXACT_MAX_VARIABLES:
        return None
    return gap_report(matrix, report.selected, exact_set_cover(matrix))


def _load_selection(path: Path) -> List[str]:
    text = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError(e.msg, f"{path}: line {e.lineno} column {e.colno}") from None
    if isinstance(data, dict):
        data = data.get("selected")
    if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
        raise DocumentError("selection must be a list of test ids or an object with 'selected'", str(path))
    return data


def cmd_verify(args: argparse.Namespace, cfg: CliConfig) -> int:
    suite = _load_suite(args.suite)
    selection = _load_selection(args.selection)
    report = check_coverage(build_coverage_matrix(suite), selection)
    if cfg.format == "document":
        doc = {"schema_version": SELECTION_SCHEMA_VERSION, **report.to_document(), "complete": report.complete}
        _emit(dump_document(doc), cfg)
    else:
        _emit("\n".join(_report_lines(report)) + "\n", cfg)
    return _coverage_exit(report)


def cmd_export_qubo(args: argparse.Namespace, cfg: CliConfig) -> int:
    suite = _load_suite(args.suite)
    model = build_qubo(build_coverage_matrix(suite), cfg.qubo_config())
    _emit(export_qubo(model), cfg)
    return EXIT_OK


def _instance_fields(args: argparse.Namespace) -> Dict[str, Any]:
    return {
        "n_tests": args.n,
        "m_features": args.m,
        "redundancy": args.redundancy,
        "single_label": args.single_label,
        **InstanceSpec.cost_fields(args.cost),
    }


def cmd_bench(args: argparse.Namespace, cfg: CliConfig) -> int:
    fields = _instance_fields(args)
    specs = [InstanceSpec(seed=cfg.seed + k, **fields) for k in range(args.instances)]
    solvers = [s.strip() for s in args.solvers.split(",") if s.strip()]
    rows, csv_text = run_benchmark(
        specs,
        solvers,
        args.repetitions,
        params=cfg.anneal_params(),
        parallel=args.parallel,
        timing=cfg.timing,
    )
    _emit(csv_text if cfg.format == "document" else format_bench_table(rows, timing=cfg.timing), cfg)
    return EXIT_OK


def cmd_gen_instance(args: argparse.Namespace, cfg: CliConfig) -> int:
    spec = InstanceSpec(seed=cfg.seed, **_instance_fields(args))
    _emit(emit_suite(gen_instance(spec)), cfg)
    return EXIT_OK


def cmd_pipeline(args: argparse.Namespace, cfg: CliConfig) -> int:
    if args.mock is not None:
        client = MockCompletionClient(fixture_dir=args.mock)
        code_path = args.code or (args.mock / "code.py")
    else:
        if args.code is None:
            raise CliUsageError("pipeline --live needs a CODE path")
        client = HttpCompletionClient.from_env()
        code_path = args.code

    config = PipelineConfig(
        solver=cfg.solver,
        qubo=cfg.qubo_config(),
        anneal=cfg.anneal_params(),
        refine=args.refine or args.compare_baseline,
        compare_baseline=args.compare_baseline,
        repair=not args.no_repair,
        timing=cfg.timing,
    )
    report = run_pipeline(_read_text(code_path), config, client)

    if args.artifacts_dir is not None:
        args.artifacts_dir.mkdir(parents=True, exist_ok=True)
        (args.artifacts_dir / "comprehensive.json").write_text(emit_suite(report.comprehensive), encoding="utf-8")
        (args.artifacts_dir / "minimized.json").write_text(emit_suite(report.minimized), encoding="utf-8")
        if report.refined_code is not None:
            (args.artifacts_dir / "refined_code.txt").write_text(report.refined_code, encoding="utf-8")
        logger.info(f"[CLI] Wrote pipeline artifacts to {args.artifacts_dir}")

    if cfg.format == "document":
        _emit(dump_document(report.to_document()), cfg)
    else:
        lines = [
            f"comprehensive: {report.comprehensive_size} tests",
            f"minimized:     {report.minimized_size} tests ({', '.join(report.minimized_ids)})",
            f"tokens:        {report.baseline_tokens} -> {report.guided_tokens} "
            f"({report.token_reduction_pct:.1f}% fewer)",
            "",
        ]
        _emit("\n".join(lines) + format_comparison_table(report.comparison_rows()), cfg)
    return EXIT_OK


# ------------------------------
# Parser
# ------------------------------

def _global_flags() -> argparse.ArgumentParser:
    parent = _Parser(add_help=False)
    parent.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    lam = parent.add_mutually_exclusive_group()
    lam.add_argument("--lambda", dest="lambda_value", type=float, help="explicit penalty weight")
    lam.add_argument(
        "--lambda-multiplier", type=float,
        help=f"auto lambda = multiplier * max cost (default {DEFAULT_LAMBDA_MULTIPLIER})",
    )
    parent.add_argument("--solver", choices=SOLVER_NAMES, default="sa")
    parent.add_argument("--sweeps", type=int, help="annealing sweeps per restart")
    parent.add_argument("--restarts", type=int, help="annealing restarts")
    parent.add_argument("--workers", type=int, help="threads for annealing restarts")
    parent.add_argument("--output", "-o", type=Path, help="write the primary output here instead of stdout")
    parent.add_argument("--format", choices=("text", "document"), default="document")
    parent.add_argument("--no-timing", action="store_true", help="omit wall-clock fields")
    parent.add_argument("--debug", action="store_true")
    parent.add_argument("--quiet", action="store_true")
    return parent


def _instance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, default=12, help="number of tests")
    p.add_argument("--m", type=int, default=6, help="number of features")
    p.add_argument("--redundancy", type=float, default=2.0, help="average covering tests per feature")
    p.add_argument("--single-label", action="store_true")
    p.add_argument("--cost", default="unit", help="'unit' or 'uniform:<lo>:<hi>'")


def build_parser() -> argparse.ArgumentParser:
    parent = _global_flags()
    parser = _Parser(prog="tcm", description="QUBO-based test-suite minimization")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("minimize", parents=[parent], help="select a minimal covering subset")
    p.add_argument("suite", type=Path)
    p.add_argument("--repair", action="store_true", help="greedily restore coverage, then prune")
    p.set_defaults(handler=cmd_minimize)

    p = sub.add_parser("verify", parents=[parent], help="check a selection's coverage")
    p.add_argument("suite", type=Path)
    p.add_argument("selection", type=Path)
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("export-qubo", parents=[parent], help="write the QUBO exchange text")
    p.add_argument("suite", type=Path)
    p.set_defaults(handler=cmd_export_qubo)

    p = sub.add_parser("bench", parents=[parent], help="time solvers on generated instances")
    _instance_flags(p)
    p.add_argument("--instances", type=int, default=1, help="instances, seeded seed..seed+k-1")
    p.add_argument("--solvers", default=",".join(SOLVER_NAMES))
    p.add_argument("--repetitions", type=int, default=3)
    p.add_argument("--parallel", action="store_true", help="run distinct instances concurrently")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("gen-instance", parents=[parent], help="write a synthetic suite document")
    _instance_flags(p)
    p.set_defaults(handler=cmd_gen_instance)

    p = sub.add_parser("pipeline", parents=[parent], help="generate, minimize and refine")
    p.add_argument("code", type=Path, nargs="?", help="code under test (default <mock dir>/code.py)")
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--mock", type=Path, metavar="DIR", help="replay 000.txt, 001.txt, ... from DIR")
    mode.add_argument("--live", action="store_true", help="use TCM_LLM_* settings")
    p.add_argument("--refine", action="store_true")
    p.add_argument("--compare-baseline", action="store_true", help="also refine against the full suite")
    p.add_argument("--no-repair", action="store_true")
    p.add_argument("--artifacts-dir", type=Path, help="write comprehensive.json and minimized.json here")
    p.set_defaults(handler=cmd_pipeline)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except CliUsageError as e:
        print(f"tcm: error: {e}", file=sys.stderr)
        return EXIT_INPUT

    setup_logging(debug=True if args.debug else None, quiet=args.quiet)
    try:
        cfg = CliConfig.from_args(args)
        return args.handler(args, cfg)
    except IncompleteCoverageError as e:
        logger.error(f"[CLI] {e}")
        return EXIT_INCOMPLETE
    except PipelineError as e:
        logger.error(f"[CLI] {e}")
        return EXIT_INPUT
    except CliUsageError as e:
        logger.error(f"[CLI] {e}")
        return EXIT_INPUT
    except _INPUT_ERRORS as e:
        logger.error(f"[CLI] {e}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
