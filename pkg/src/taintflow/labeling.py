"""LLM-backed taint-spec inference: batched prompts, response parsing, and
conversion of labels into taint specs.

External APIs are labeled few-shot per CWE; internal function parameters are
labeled zero-shot with project documentation and no CWE context.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from typing import Iterable, Optional, Sequence

from .candidates import CandidateSet, ExternalCandidate, InternalParamCandidate
from .core import Cwe, Role, SpecNodeType, TaintSpec, sort_specs, spec_to_obj
from .llm import ChatBackend, ChatMessage, TransportError, system, user

EXTERNAL_BATCH_LIMIT = 30
INTERNAL_BATCH_LIMIT = 20
README_EXCERPT_CHARS = 2000

EXTERNAL_ROWS_HEADER = "APIs (index,package,class,method,signature):"
INTERNAL_ROWS_HEADER = "Parameters (index,function,position,name):"


class BatchTooLargeError(ValueError):
    pass


class UnparseableResponseError(Exception):
    pass


class PartialResultError(TransportError):
    """Some batches failed after retries; carries what did succeed."""

    def __init__(self, specs: "LabeledSpecs", failed_batches: list[int]) -> None:
        super().__init__(f"{len(failed_batches)} batch(es) failed: {failed_batches}")
        self.specs = specs
        self.failed_batches = failed_batches


class RowLabel(str, Enum):
    SOURCE = "Source"
    SINK = "Sink"
    TAINT_PROPAGATOR = "TaintPropagator"
    NONE = "None"


@dataclass(frozen=True)
class LabelRow:
    api_index: int
    label: RowLabel
    sink_args: tuple[int, ...] = ()
    explanation: Optional[str] = None


@dataclass
class ParsedLabels:
    rows: list[LabelRow]
    dropped: int = 0


@dataclass
class LabeledSpecs:
    """Inferred specs for one (project, CWE) run, canonically sorted."""

    cwe: Cwe
    sources: list[TaintSpec] = field(default_factory=list)
    sinks: list[TaintSpec] = field(default_factory=list)
    propagators: list[TaintSpec] = field(default_factory=list)

    def all_specs(self) -> list[TaintSpec]:
        return [*self.sources, *self.sinks, *self.propagators]

    def to_obj(self) -> list[dict]:
        return [spec_to_obj(s) for s in sort_specs(self.all_specs())]

    def counts(self) -> dict:
        return {
            "sources": len(self.sources),
            "sinks": len(self.sinks),
            "propagators": len(self.propagators),
        }


def cwe_info(cwe: Cwe) -> dict:
    data = json.loads(resources.files("taintflow.data").joinpath("cwe.json").read_text("utf-8"))
    return data[cwe.value]


def default_fewshot(cwe: Cwe) -> list[dict]:
    path = resources.files("taintflow.data").joinpath(f"fewshot/{cwe.value}.json")
    return json.loads(path.read_text("utf-8"))


def render_external_row(index: int, cand: ExternalCandidate) -> str:
    sig = ",".join(cand.api.signature)
    return f'{index},{cand.api.package},{cand.api.class_name},{cand.api.method},"({sig})"'


def render_internal_row(index: int, cand: InternalParamCandidate) -> str:
    return f"{index},{cand.function},{cand.position},{cand.param_name}"


_EXTERNAL_SYSTEM = (
    "You are a security analyst labeling library APIs for taint analysis. "
    "For every API row the user lists, decide whether it is a Source of "
    "attacker-controlled data (via its return value), a Sink (an argument "
    "reaching a dangerous operation), a TaintPropagator (its return value "
    "carries taint from its arguments, but it is not itself dangerous), or "
    "None of these, for the weakness class described by the user. "
    "Respond with a JSON array only, no prose: one object per labeled API, "
    '{"api_index": <row index>, "label": "Source"|"Sink"|"TaintPropagator"|"None", '
    '"sink_args": [<argument positions>], "explanation": "<short reason>"}. '
    "sink_args is required for Sink labels; use -1 for the receiver object. "
    "Omit rows that are None if you prefer brevity."
)

_INTERNAL_SYSTEM = (
    "You are a security analyst reviewing the public API of a library. "
    "For every function parameter the user lists, decide whether a "
    "downstream caller could plausibly pass attacker-controlled (malicious) "
    "input through it, making it a Source for taint analysis. "
    "Respond with a JSON array only, no prose: one object per parameter, "
    '{"api_index": <row index>, "label": "Source"|"None", '
    '"explanation": "<short reason>"}.'
)


def build_external_prompt(
    batch: Sequence[ExternalCandidate],
    cwe: Cwe,
    fewshot: Optional[Sequence[dict]] = None,
) -> list[ChatMessage]:
    """Few-shot batched labeling prompt for external APIs."""
    if not 1 <= len(batch) <= EXTERNAL_BATCH_LIMIT:
        raise BatchTooLargeError(f"external batch must have 1..{EXTERNAL_BATCH_LIMIT} rows, got {len(batch)}")
    if fewshot is None:
        fewshot = default_fewshot(cwe)
    info = cwe_info(cwe)
    lines = [
        f"Weakness class: {cwe.value} ({info['name']}).",
        info["description"],
        "",
        "Examples of correct labels:",
    ]
    for ex in fewshot:
        sig = ",".join(ex.get("signature", []))
        answer: dict = {"label": ex["label"]}
        if ex.get("sink_args") is not None:
            answer["sink_args"] = ex["sink_args"]
        lines.append(
            f'  {ex["package"]},{ex["class"]},{ex["method"]},"({sig})" -> '
            + json.dumps(answer, sort_keys=True)
            + (f'  ({ex["why"]})' if ex.get("why") else "")
        )
    lines += [
        "",
        "Assume arguments may carry potentially malicious input and that "
        "receiver objects may hold unsanitized user data.",
        "",
        EXTERNAL_ROWS_HEADER,
    ]
    lines += [render_external_row(i, cand) for i, cand in enumerate(batch)]
    return [system(_EXTERNAL_SYSTEM), user("\n".join(lines))]


def build_internal_prompt(
    batch: Sequence[InternalParamCandidate],
    readme: Optional[str] = None,
    cwe: Optional[Cwe] = None,
) -> list[ChatMessage]:
    """Zero-shot labeling prompt for public internal function parameters.

    Deliberately carries no weakness-class information: whether a parameter
    can receive malicious input does not depend on it (cwe is accepted for
    call-site uniformity and ignored).
    """
    del cwe
    if not 1 <= len(batch) <= INTERNAL_BATCH_LIMIT:
        raise BatchTooLargeError(f"internal batch must have 1..{INTERNAL_BATCH_LIMIT} rows, got {len(batch)}")
    lines: list[str] = []
    if readme:
        lines += ["Project README (excerpt):", readme[:README_EXCERPT_CHARS], ""]
    docs = [(c, c.doc) for c in batch if c.doc]
    if docs:
        lines.append("Documentation:")
        lines += [f"  {c.function}: {doc}" for c, doc in docs]
        lines.append("")
    lines.append(
        "For each parameter below, answer whether a downstream caller could "
        "pass malicious input through it."
    )
    lines.append(INTERNAL_ROWS_HEADER)
    lines += [render_internal_row(i, cand) for i, cand in enumerate(batch)]
    return [system(_INTERNAL_SYSTEM), user("\n".join(lines))]


def parse_label_response(text: str, batch_size: int) -> ParsedLabels:
    """Extract the first JSON array from a response and convert its rows.

    Markdown fences and surrounding prose are tolerated; rows with an
    out-of-range index, an unknown label, or a Sink label without positions
    are dropped and counted. Raises only when no JSON array is present.
    """
    data = _first_json_array(text)
    if data is None:
        raise UnparseableResponseError(f"no JSON array in response: {text[:120]!r}")
    rows: list[LabelRow] = []
    dropped = 0
    for item in data:
        if not isinstance(item, dict):
            dropped += 1
            continue
        try:
            index = int(item["api_index"])
            label = RowLabel(item["label"])
        except (KeyError, ValueError, TypeError):
            dropped += 1
            continue
        if not 0 <= index < batch_size:
            dropped += 1
            continue
        sink_args: tuple[int, ...] = ()
        if label is RowLabel.SINK:
            raw_args = item.get("sink_args")
            if not isinstance(raw_args, list) or not raw_args:
                dropped += 1
                continue
            try:
                sink_args = tuple(int(a) for a in raw_args)
            except (ValueError, TypeError):
                dropped += 1
                continue
        rows.append(LabelRow(index, label, sink_args, item.get("explanation")))
    return ParsedLabels(rows=rows, dropped=dropped)


def _first_json_array(text: str) -> Optional[list]:
    stripped = _strip_fences(text)
    decoder = json.JSONDecoder()
    for start, ch in enumerate(stripped):
        if ch != "[":
            continue
        try:
            value, _end = decoder.raw_decode(stripped, start)
        except json.JSONDecodeError:
            continue
        if isinstance(value, list):
            return value
    return None


def _strip_fences(text: str) -> str:
    out: list[str] = []
    for line in text.splitlines():
        if line.lstrip().startswith("```"):
            continue
        out.append(line)
    return "\n".join(out)


_ROLE_RANK = {Role.SOURCE: 0, Role.SINK: 1, Role.TAINT_PROPAGATOR: 2}


def label_specs(
    candidates: CandidateSet,
    backend: ChatBackend,
    cwe: Cwe,
    role_filter: Optional[set[Role]] = None,
    readme: Optional[str] = None,
    fewshot: Optional[Sequence[dict]] = None,
) -> LabeledSpecs:
    """Run batched labeling over all candidates and merge labels into specs.

    Batches that fail after transport retries do not abort the run: a
    PartialResultError carrying the successful batches' specs is raised at
    the end instead.
    """
    chosen: dict[tuple, TaintSpec] = {}
    failed: list[int] = []
    batch_no = 0

    def record(spec: TaintSpec) -> None:
        key = (spec.node_type.value, spec.api.key(), spec.api.position)
        current = chosen.get(key)
        if current is None or _ROLE_RANK[spec.role] < _ROLE_RANK[current.role]:
            chosen[key] = spec

    for batch in _chunks(candidates.external, EXTERNAL_BATCH_LIMIT):
        messages = build_external_prompt(batch, cwe, fewshot)
        try:
            text = backend.complete(messages)
        except TransportError:
            failed.append(batch_no)
            batch_no += 1
            continue
        batch_no += 1
        for row in parse_label_response(text, len(batch)).rows:
            cand = batch[row.api_index]
            for spec in _external_row_to_specs(row, cand, cwe):
                record(spec)

    for batch in _chunks(candidates.internal, INTERNAL_BATCH_LIMIT):
        messages = build_internal_prompt(batch, readme)
        try:
            text = backend.complete(messages)
        except TransportError:
            failed.append(batch_no)
            batch_no += 1
            continue
        batch_no += 1
        for row in parse_label_response(text, len(batch)).rows:
            cand = batch[row.api_index]
            if row.label is RowLabel.SOURCE and cand.api is not None:
                record(
                    TaintSpec(
                        node_type=SpecNodeType.PARAMETER,
                        api=cand.api.with_position(cand.position),
                        role=Role.SOURCE,
                        cwe=cwe,
                    )
                )

    specs = _collect(chosen.values(), cwe, role_filter)
    if failed:
        raise PartialResultError(specs, failed)
    return specs


def _external_row_to_specs(row: LabelRow, cand: ExternalCandidate, cwe: Cwe) -> Iterable[TaintSpec]:
    if row.label is RowLabel.SOURCE:
        if cand.may_be_source:
            yield TaintSpec(SpecNodeType.RETURN_VALUE, cand.api.with_position(None), Role.SOURCE, cwe)
    elif row.label is RowLabel.SINK:
        for pos in row.sink_args:
            # only positions observed at some call site can ever match
            if pos in cand.sink_positions:
                yield TaintSpec(SpecNodeType.ARGUMENT, cand.api.with_position(pos), Role.SINK, cwe)
    elif row.label is RowLabel.TAINT_PROPAGATOR:
        yield TaintSpec(SpecNodeType.RETURN_VALUE, cand.api.with_position(None), Role.TAINT_PROPAGATOR, cwe)


def _collect(specs: Iterable[TaintSpec], cwe: Cwe, role_filter: Optional[set[Role]]) -> LabeledSpecs:
    out = LabeledSpecs(cwe=cwe)
    for spec in specs:
        if role_filter is not None and spec.role not in role_filter:
            continue
        if spec.role is Role.SOURCE:
            out.sources.append(spec)
        elif spec.role is Role.SINK:
            out.sinks.append(spec)
        elif spec.role is Role.TAINT_PROPAGATOR:
            out.propagators.append(spec)
    out.sources = sort_specs(out.sources)
    out.sinks = sort_specs(out.sinks)
    out.propagators = sort_specs(out.propagators)
    return out


def _chunks(items: Sequence, size: int) -> Iterable[Sequence]:
    for start in range(0, len(items), size):
        yield items[start : start + size]


def split_specs_by_role(specs: Iterable[TaintSpec], cwe: Cwe) -> LabeledSpecs:
    """Partition pre-existing specs (e.g. loaded from a file) by role."""
    return _collect([s for s in specs if s.cwe == cwe and s.role is not Role.SANITIZER], cwe, None)
