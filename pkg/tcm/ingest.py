# tcm/ingest.py
"""
Suite documents: parse, emit, and tolerant extraction from model output.

Document format (JSON, schema_version 1):

    {
      "features": [{"description": "...", "id": "f1"}, ...],   # optional
      "schema_version": 1,
      "tests": [{"body": "...", "cost": 1.0, "covers": ["f1"], "id": "t1", "name": "..."}]
    }

Keys are emitted sorted with two-space indentation. `cost` is always
emitted; `body` and `description` only when present.
"""
from __future__ import annotations

import json
import logging
import re
from typing import Annotated, Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .model import Feature, SuiteValidationError, TestCase, TestSuite

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SUPPORTED_SCHEMA_VERSIONS = {1}
DIAGNOSTIC_PREFIX_CHARS = 200

FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


class DocumentError(Exception):
    """Raised when a suite document cannot be read. `location` names where."""

    def __init__(self, message: str, location: Optional[str] = None):
        super().__init__(f"{location}: {message}" if location else message)
        self.location = location


# ------------------------------
# Document schema
# ------------------------------

class TestEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")
    __test__ = False

    id: str = Field(..., min_length=1)
    name: Optional[str] = None
    cost: Optional[float] = None
    covers: List[Annotated[str, Field(min_length=1)]]
    body: Optional[str] = None


class FeatureEntry(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id: str = Field(..., min_length=1)
    description: Optional[str] = None


class SuiteDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    schema_version: int = SCHEMA_VERSION
    tests: List[TestEntry]
    features: Optional[List[FeatureEntry]] = None


def _location(err: ValidationError) -> str:
    first = err.errors()[0]
    parts = []
    for item in first.get("loc", ()):
        if isinstance(item, int):
            parts.append(f"[{item}]")
        else:
            parts.append(("." if parts else "") + str(item))
    return "".join(parts) or "document"


# ------------------------------
# Parsing
# ------------------------------

def _suite_from_data(data: Any) -> TestSuite:
    if not isinstance(data, dict):
        raise DocumentError("top level must be an object", "document")
    try:
        doc = SuiteDocument.model_validate(data)
    except ValidationError as e:
        raise DocumentError(e.errors()[0].get("msg", str(e)), _location(e)) from None

    if doc.schema_version not in SUPPORTED_SCHEMA_VERSIONS:
        raise DocumentError(f"unsupported schema_version {doc.schema_version}", "schema_version")

    features: List[Feature] = []
    declared = set()
    for k, entry in enumerate(doc.features or []):
        if entry.id in declared:
            raise DocumentError(f"duplicate feature id {entry.id}", f"features[{k}]")
        declared.add(entry.id)
        features.append(Feature(id=entry.id, description=entry.description))

    tests: List[TestCase] = []
    seen = set()
    for k, entry in enumerate(doc.tests):
        where = f"tests[{k}]"
        if entry.id in seen:
            raise DocumentError(f"duplicate test id {entry.id}", where)
        seen.add(entry.id)
        if not entry.covers:
            raise DocumentError(f"test {entry.id} has an empty covers list", where)
        cost = 1.0 if entry.cost is None else entry.cost
        if cost < 0:
            raise DocumentError(f"test {entry.id} has negative cost {cost}", where)
        # features referenced before (or without) declaration are registered
        # in first-reference order, after the declared ones
        for fid in entry.covers:
            if fid not in declared:
                declared.add(fid)
                features.append(Feature(id=fid))
        try:
            tests.append(TestCase(
                id=entry.id,
                name=entry.name or entry.id,
                cost=cost,
                covers=tuple(entry.covers),
                body=entry.body,
            ))
        except ValidationError as e:
            raise DocumentError(f"test {entry.id}: {e.errors()[0].get('msg')}", where) from None

    suite = TestSuite(tests=tuple(tests), features=tuple(features))
    try:
        suite.check_integrity()
    except SuiteValidationError as e:
        raise DocumentError(str(e), "document") from None
    return suite


def parse_suite(text: str) -> TestSuite:
    """Parse a suite document. Missing cost defaults to 1.0."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise DocumentError(e.msg, f"line {e.lineno} column {e.colno}") from None
    suite = _suite_from_data(data)
    logger.debug(f"[Ingest] Parsed suite: {len(suite.tests)} tests, {len(suite.features)} features")
    return suite


def _candidate_objects(text: str):
    """Fenced block bodies first, then every top-level object in the raw text."""
    decoder = json.JSONDecoder()
    sources = [m.group(1) for m in FENCE_RE.finditer(text)] + [text]
    for source in sources:
        pos = source.find("{")
        while pos != -1:
            try:
                obj, end = decoder.raw_decode(source, pos)
            except json.JSONDecodeError:
                pos = source.find("{", pos + 1)
                continue
            yield obj
            pos = source.find("{", end)


def parse_model_output(text: str) -> TestSuite:
    """
    Strip prose and code fences around a suite document and parse the first
    object that looks like one (has a "tests" key and validates).
    """
    last_error: Optional[DocumentError] = None
    for obj in _candidate_objects(text or ""):
        if not isinstance(obj, dict) or "tests" not in obj:
            continue
        try:
            return _suite_from_data(obj)
        except DocumentError as e:
            last_error = e
            continue
    detail = f" (last error: {last_error})" if last_error else ""
    raise DocumentError(
        f"no suite document found in model output{detail}; "
        f"input starts with {(text or '')[:DIAGNOSTIC_PREFIX_CHARS]!r}"
    )


# ------------------------------
# Emission
# ------------------------------

def suite_to_data(suite: TestSuite) -> Dict[str, Any]:
    tests = []
    for t in suite.tests:
        entry: Dict[str, Any] = {"id": t.id, "name": t.name, "cost": t.cost, "covers": list(t.covers)}
        if t.body is not None:
            entry["body"] = t.body
        tests.append(entry)
    features = []
    for f in suite.features:
        entry = {"id": f.id}
        if f.description is not None:
            entry["description"] = f.description
        features.append(entry)
    return {"schema_version": SCHEMA_VERSION, "tests": tests, "features": features}


def dump_document(data: Any) -> str:
    """Key-sorted, two-space JSON with a trailing newline."""
    return json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def emit_suite(suite: TestSuite) -> str:
    return dump_document(suite_to_data(suite))
