# tcm/llm.py
"""
Completion-service adapter and the three-stage pipeline:

    generate  -> comprehensive, redundant, labeled suite from the code
    minimize  -> coverage matrix -> QUBO -> solver -> coverage check
    refine    -> (optional) code rewrite with the minimized suite as its spec

Transports: MockCompletionClient replays numbered fixture files
(000.txt, 001.txt, ... by request index); HttpCompletionClient speaks the
usual chat-completions JSON contract and is configured from TCM_LLM_*.
"""
from __future__ import annotations

import logging
import string
import time
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Protocol, Sequence, Tuple

import httpx
from pydantic import BaseModel, ConfigDict, Field

from . import config as tcm_config
from .bench import improvement_percent
from .ingest import FENCE_RE, DocumentError, emit_suite, parse_model_output
from .model import TestSuite, build_coverage_matrix
from .qubo import QuboConfig, build_qubo, energy
from .solvers import AnnealParams, solve
from .verify import CoverageReport, check_coverage, repair_selection

logger = logging.getLogger(__name__)

PROMPT_DIR = tcm_config.BASE_DIR / "prompts"
PROMPT_VERSION = "v1"
GENERATE_ATTEMPTS = 2
PREVIOUS_REPLY_CHARS = 200


class CompletionError(Exception):
    """Raised when a completion transport cannot produce a response."""
    pass


class PipelineError(Exception):
    """Raised when a pipeline stage fails. Carries the stage name and transcripts so far."""

    def __init__(self, message: str, stage: str, transcripts: Optional[List["Transcript"]] = None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.transcripts = list(transcripts or [])


class IncompleteCoverageError(PipelineError):
    """Raised when the minimized selection leaves coverable features uncovered."""
    pass


def estimate_tokens(text: str) -> int:
    """ceil(len / 4)."""
    return (len(text) + 3) // 4


# ------------------------------
# Transcripts and prompts
# ------------------------------

class Transcript(BaseModel):
    stage: str
    prompt: str
    response: str
    prompt_tokens: int
    response_tokens: int
    # provider-reported counts (live transport only)
    provider_prompt_tokens: Optional[int] = None
    provider_completion_tokens: Optional[int] = None


def render_prompt(name: str, **values: str) -> str:
    path = PROMPT_DIR / f"{name}.{PROMPT_VERSION}.txt"
    try:
        template = string.Template(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CompletionError(f"prompt template not found: {path.name}") from None
    return template.substitute(values)


def _exchange(
    client: "CompletionClient",
    stage: str,
    prompt: str,
    transcripts: List[Transcript],
) -> str:
    response = client.complete(prompt)
    usage = getattr(client, "last_usage", None) or {}
    transcripts.append(Transcript(
        stage=stage,
        prompt=prompt,
        response=response,
        prompt_tokens=estimate_tokens(prompt),
        response_tokens=estimate_tokens(response),
        provider_prompt_tokens=usage.get("prompt_tokens"),
        provider_completion_tokens=usage.get("completion_tokens"),
    ))
    logger.debug(f"[Pipeline] {stage}: {len(prompt)} chars out, {len(response)} chars back")
    return response


# ------------------------------
# Transports
# ------------------------------

class CompletionClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class MockCompletionClient:
    """
    Replays canned responses by request index. Either an explicit list of
    `responses` or a fixture directory holding 000.txt, 001.txt, ...
    """

    def __init__(self, fixture_dir: Optional[Path] = None, responses: Optional[Sequence[str]] = None):
        if fixture_dir is None and responses is None:
            raise CompletionError("mock client needs a fixture directory or a response list")
        self.fixture_dir = Path(fixture_dir) if fixture_dir is not None else None
        self.responses = list(responses) if responses is not None else None
        self.prompts: List[str] = []
        self.last_usage: Optional[Dict[str, int]] = None

    @property
    def call_count(self) -> int:
        return len(self.prompts)

    def complete(self, prompt: str) -> str:
        index = len(self.prompts)
        self.prompts.append(prompt)
        if self.responses is not None:
            if index >= len(self.responses):
                raise CompletionError(f"mock has no response #{index} (only {len(self.responses)})")
            return self.responses[index]
        path = self.fixture_dir / f"{index:03d}.txt"
        if not path.is_file():
            raise CompletionError(f"mock fixture missing: {path}")
        return path.read_text(encoding="utf-8")


class HttpCompletionClient:
    """POST {model, messages, temperature: 0} to a chat-completions endpoint."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key: str = "",
        timeout: float = 60.0,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        if not endpoint or not model:
            raise CompletionError("live transport needs TCM_LLM_ENDPOINT and TCM_LLM_MODEL")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.timeout = timeout
        self.transport = transport
        self.last_usage: Optional[Dict[str, int]] = None

    @classmethod
    def from_env(cls) -> "HttpCompletionClient":
        tcm_config.load_secrets()
        return cls(
            endpoint=tcm_config.llm_endpoint(),
            model=tcm_config.llm_model(),
            api_key=tcm_config.llm_api_key(),
            timeout=tcm_config.llm_timeout(),
        )

    def complete(self, prompt: str) -> str:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": 0,
        }
        try:
            with httpx.Client(timeout=self.timeout, transport=self.transport) as client:
                resp = client.post(self.endpoint, headers=headers, json=payload)
        except httpx.HTTPError as e:
            raise CompletionError(f"request to {self.endpoint} failed: {e}") from e

        if resp.status_code == 401:
            raise CompletionError("Unauthorized: check TCM_LLM_API_KEY")
        try:
            resp.raise_for_status()
        except httpx.HTTPStatusError as e:
            raise CompletionError(f"completion service returned {resp.status_code}") from e

        try:
            data = resp.json()
            content = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            raise CompletionError("unexpected response shape from completion service") from None
        usage = data.get("usage") or {}
        self.last_usage = {k: int(usage[k]) for k in ("prompt_tokens", "completion_tokens") if k in usage}
        return content or ""


# ------------------------------
# Stages
# ------------------------------

def generate_comprehensive_suite(
    code: str,
    client: CompletionClient,
    transcripts: Optional[List[Transcript]] = None,
) -> TestSuite:
    """Ask for a redundant labeled suite; one error-correcting retry."""
    transcripts = transcripts if transcripts is not None else []
    if not code.strip():
        raise PipelineError("code under test is empty", "generate", transcripts)

    prompt = render_prompt("generate_suite", code=code)
    for attempt in range(1, GENERATE_ATTEMPTS + 1):
        response = _exchange(client, "generate", prompt, transcripts)
        try:
            suite = parse_model_output(response)
        except DocumentError as e:
            logger.warning(f"[Pipeline] Attempt {attempt} unparsable: {e}")
            prompt = render_prompt(
                "repair_suite",
                error=str(e),
                code=code,
                previous=response[:PREVIOUS_REPLY_CHARS],
            )
            continue
        logger.info(f"[Pipeline] Generated suite: {len(suite.tests)} tests, {len(suite.features)} features")
        return suite

    raise PipelineError(
        f"model output unparsable after {GENERATE_ATTEMPTS} attempts", "generate", transcripts
    )


def extract_code(response: str) -> str:
    """First fenced block's contents, else the whole response."""
    m = FENCE_RE.search(response)
    return m.group(1) if m else response


def refine_code(
    code: str,
    minimized: TestSuite,
    client: CompletionClient,
    transcripts: Optional[List[Transcript]] = None,
    stage: str = "refine",
) -> str:
    transcripts = transcripts if transcripts is not None else []
    prompt = render_prompt("refine_code", code=code, suite=emit_suite(minimized).rstrip("\n"))
    response = _exchange(client, stage, prompt, transcripts)
    if not response.strip():
        raise PipelineError("empty response from completion service", stage, transcripts)
    return extract_code(response)


# ------------------------------
# Pipeline
# ------------------------------

class PipelineConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    solver: Literal["sa", "exact", "greedy"] = "sa"
    qubo: QuboConfig = Field(default_factory=QuboConfig)
    anneal: AnnealParams = Field(default_factory=AnnealParams)
    refine: bool = False
    compare_baseline: bool = False  # also refine against the full suite (needs refine)
    repair: bool = True
    timing: bool = True


class PipelineReport(BaseModel):
    baseline_tokens: int
    guided_tokens: int
    token_reduction_pct: float
    comprehensive_size: int
    minimized_size: int
    minimized_ids: List[str]
    refined_code: Optional[str] = None
    baseline_refined_code: Optional[str] = None
    transcripts: List[Transcript] = Field(default_factory=list)
    solver: str
    energy: float
    lam: float
    coverage: CoverageReport
    timings: Dict[str, float] = Field(default_factory=dict)
    # the suites themselves travel as separate artifacts
    comprehensive: TestSuite = Field(exclude=True)
    minimized: TestSuite = Field(exclude=True)

    def to_document(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")

    def comparison_rows(self) -> List[Tuple[str, float, float]]:
        """(metric, baseline, guided) rows for format_comparison_table."""
        rows = [
            ("Total tokens", float(self.baseline_tokens), float(self.guided_tokens)),
            ("Tests in spec", float(self.comprehensive_size), float(self.minimized_size)),
        ]
        if "refine_baseline" in self.timings and "refine" in self.timings:
            rows.append(("Generation time (s)", self.timings["refine_baseline"], self.timings["refine"]))
        return rows


def _minimize(suite: TestSuite, config: PipelineConfig):
    matrix = build_coverage_matrix(suite)
    model = build_qubo(matrix, config.qubo)
    result = solve(config.solver, model, matrix, config.anneal)
    selected = result.selected_ids(matrix.test_order)
    if config.repair:
        selected = repair_selection(matrix, selected)
    report = check_coverage(matrix, selected)
    chosen = set(selected)
    final_energy = energy(model, [1 if tid in chosen else 0 for tid in matrix.test_order])
    return report, model, result, final_energy


def run_pipeline(code: str, config: PipelineConfig, client: CompletionClient) -> PipelineReport:
    """
    generate -> minimize -> (refine). Errors surface as PipelineError naming
    the stage, with the transcripts collected up to that point.
    """
    transcripts: List[Transcript] = []
    timings: Dict[str, float] = {}

    def timed(stage: str, fn, *args, **kwargs):
        started = time.perf_counter()
        try:
            return fn(*args, **kwargs)
        except PipelineError as e:
            e.transcripts = list(transcripts)
            raise
        except Exception as e:
            raise PipelineError(str(e), stage, transcripts) from e
        finally:
            timings[stage] = time.perf_counter() - started

    suite = timed("generate", generate_comprehensive_suite, code, client, transcripts)

    if not suite.tests:
        raise PipelineError("no tests", "minimize", transcripts)
    report, model, result, final_energy = timed("minimize", _minimize, suite, config)
    if not report.complete:
        missing = sorted(set(report.uncovered) - set(report.uncoverable))
        raise IncompleteCoverageError(
            f"selection leaves coverable features uncovered: {', '.join(missing)}", "minimize", transcripts
        )
    minimized = suite.subset(report.selected)
    logger.info(
        f"[Pipeline] Minimized {len(suite.tests)} -> {len(minimized.tests)} tests "
        f"({result.solver}, energy {final_energy:g})"
    )

    baseline_refined = refined = None
    if config.refine:
        if config.compare_baseline:
            baseline_refined = timed(
                "refine_baseline", refine_code, code, suite, client, transcripts, "refine_baseline"
            )
        refined = timed("refine", refine_code, code, minimized, client, transcripts, "refine")

    baseline_tokens = estimate_tokens(code + emit_suite(suite))
    guided_tokens = estimate_tokens(code + emit_suite(minimized))

    return PipelineReport(
        baseline_tokens=baseline_tokens,
        guided_tokens=guided_tokens,
        token_reduction_pct=improvement_percent(baseline_tokens, guided_tokens),
        comprehensive_size=len(suite.tests),
        minimized_size=len(minimized.tests),
        minimized_ids=list(report.selected),
        refined_code=refined,
        baseline_refined_code=baseline_refined,
        transcripts=transcripts,
        solver=result.solver,
        energy=final_energy,
        lam=model.lam,
        coverage=report,
        timings=timings if config.timing else {},
        comprehensive=suite,
        minimized=minimized,
    )
