"""Contextual analysis of alerts: snippet assembly, verdict prompts and
parsing, and false-positive pruning across alerts sharing an endpoint."""
from __future__ import annotations

import json
import posixpath
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .core import (
    Alert,
    DataflowGraph,
    Enclosing,
    IntermediateStep,
    NodeId,
    NodeKind,
    Snippet,
    SnippetContext,
    SpecNodeType,
    TaintPath,
    TaintSpec,
    Cwe,
    Verdict,
)
from .labeling import cwe_info
from .llm import ChatBackend, ChatMessage, TransportError, system, user

SNIPPET_RADIUS = 5  # lines of context either side of the marked line
DEFAULT_SEGMENTS = 10

SOURCE_MARKER = "// <-- SOURCE"
SINK_MARKER = "// <-- SINK"
SOURCE_LINE_PREFIX = "Source: "
SINK_LINE_PREFIX = "Sink: "

_CALL_KINDS = (NodeKind.CALL_RESULT, NodeKind.ARGUMENT)


class SourceResolver:
    """Reads project files (relative forward-slash paths) for snippet text."""

    def __init__(self, root: Optional[str | Path] = None) -> None:
        self.root = Path(root) if root is not None else None
        self._cache: dict[str, Optional[list[str]]] = {}

    def lines(self, rel_path: str) -> Optional[list[str]]:
        if rel_path in self._cache:
            return self._cache[rel_path]
        result: Optional[list[str]] = None
        if self.root is not None:
            full = self.root / rel_path
            if full.is_file():
                result = full.read_text(encoding="utf-8").splitlines()
        self._cache[rel_path] = result
        return result


def select_intermediate_steps(
    path: TaintPath, g: DataflowGraph, segments: int = DEFAULT_SEGMENTS
) -> list[NodeId]:
    """Pick at most ``segments`` interior nodes, one per contiguous segment.

    Within a segment, a call-related node is preferred (calls are where
    sanitization would happen); ties break to the earliest node.
    """
    if segments < 1:
        raise ValueError("segments must be >= 1")
    interior = list(path.nodes[1:-1])
    n = len(interior)
    if n <= segments:
        return interior
    picked: list[NodeId] = []
    for k in range(segments):
        lo = (k * n) // segments
        hi = ((k + 1) * n) // segments
        segment = interior[lo:hi]
        choice = next(
            (nid for nid in segment if g.node(nid).kind in _CALL_KINDS),
            segment[0],
        )
        picked.append(choice)
    return picked


def _clip_snippet(lines: list[str], line: int, marker: str) -> Snippet:
    lo = max(1, line - SNIPPET_RADIUS)
    hi = min(len(lines), line + SNIPPET_RADIUS)
    rendered = []
    for ln in range(lo, hi + 1):
        text = lines[ln - 1]
        if ln == line:
            text = f"{text}  {marker}"
        rendered.append(f"{ln:4d} | {text}")
    return Snippet(text="\n".join(rendered), marked_line=line, start_line=lo)


def _module_of(path: str) -> str:
    stem = posixpath.basename(path)
    return stem.rsplit(".", 1)[0] if "." in stem else stem


def build_snippet_context(
    alert: Alert,
    g: DataflowGraph,
    resolver: Optional[SourceResolver] = None,
    segments: int = DEFAULT_SEGMENTS,
) -> SnippetContext:
    resolver = resolver or SourceResolver()
    src = g.node(alert.path.nodes[0])
    snk = g.node(alert.path.nodes[-1])

    def snippet(node, marker: str) -> Snippet:
        lines = resolver.lines(node.file)
        if lines is None:
            # no file on disk: fall back to the single recorded line
            return Snippet(text=f"{node.line:4d} | {node.code_text}  {marker}", marked_line=node.line, start_line=node.line)
        return _clip_snippet(lines, node.line, marker)

    steps = tuple(
        IntermediateStep(file=g.node(nid).file, line=g.node(nid).line, code_text=g.node(nid).code_text)
        for nid in select_intermediate_steps(alert.path, g, segments)
    )
    return SnippetContext(
        source_snippet=snippet(src, SOURCE_MARKER),
        sink_snippet=snippet(snk, SINK_MARKER),
        source_enclosing=Enclosing(function=src.enclosing_function, module=_module_of(src.file)),
        sink_enclosing=Enclosing(function=snk.enclosing_function, module=_module_of(snk.file)),
        intermediate=steps,
    )


def snippet_context_from_steps(
    alert: Alert,
    segments: int = DEFAULT_SEGMENTS,
    resolver: Optional[SourceResolver] = None,
) -> SnippetContext:
    """Context built from the alert's own steps, for alerts loaded from disk
    without a graph; full clipped windows when the sources are available,
    single recorded lines otherwise."""
    first, last = alert.steps[0], alert.steps[-1]
    interior = list(alert.steps[1:-1])
    if len(interior) > segments:
        n = len(interior)
        interior = [interior[(k * n) // segments] for k in range(segments)]

    def snippet(step, marker: str) -> Snippet:
        lines = resolver.lines(step.file) if resolver is not None else None
        if lines is None:
            return Snippet(
                text=f"{step.line:4d} | {step.code}  {marker}",
                marked_line=step.line,
                start_line=step.line,
            )
        return _clip_snippet(lines, step.line, marker)

    return SnippetContext(
        source_snippet=snippet(first, SOURCE_MARKER),
        sink_snippet=snippet(last, SINK_MARKER),
        source_enclosing=Enclosing(function=first.function, module=_module_of(first.file)),
        sink_enclosing=Enclosing(function=last.function, module=_module_of(last.file)),
        intermediate=tuple(IntermediateStep(s.file, s.line, s.code) for s in interior),
    )


def describe_endpoint(spec: TaintSpec) -> str:
    api = spec.api
    if spec.node_type is SpecNodeType.RETURN_VALUE:
        return f"return value of {api.display()}"
    if spec.node_type is SpecNodeType.ARGUMENT:
        which = "receiver" if api.position == -1 else f"argument {api.position}"
        return f"{which} of {api.display()}"
    return f"parameter {api.position} of {api.method}"


_FILTER_SYSTEM = (
    "You are a security analyst triaging a static-analysis alert. The user "
    "shows one dataflow path from a candidate source to a candidate sink, "
    "with code context. Judge whether this path is a real, exploitable "
    "instance of the stated weakness class. Respond with a single JSON "
    "object and nothing else, writing your reasoning first: "
    '{"explanation": "<your reasoning>", "verdict": true|false, '
    '"source_is_fp": true|false, "sink_is_fp": true|false}. '
    "verdict true means the alert is a true positive. When the verdict is "
    "false, set source_is_fp / sink_is_fp if that endpoint can never play "
    "its role regardless of the path."
)


def build_context_prompt(alert: Alert, cwe: Cwe, ctx: SnippetContext) -> list[ChatMessage]:
    info = cwe_info(cwe)
    src_step, snk_step = alert.steps[0], alert.steps[-1]
    lines = [
        f"Weakness class: {cwe.value} ({info['name']}).",
        info["description"],
        "",
        f"{SOURCE_LINE_PREFIX}{describe_endpoint(alert.path.source_spec)} "
        f"at {src_step.file}:{src_step.line} "
        f"in {ctx.source_enclosing.function} (module {ctx.source_enclosing.module})",
        ctx.source_snippet.text,
        "",
        f"{SINK_LINE_PREFIX}{describe_endpoint(alert.path.sink_spec)} "
        f"at {snk_step.file}:{snk_step.line} "
        f"in {ctx.sink_enclosing.function} (module {ctx.sink_enclosing.module})",
        ctx.sink_snippet.text,
    ]
    if ctx.intermediate:
        lines += ["", "Intermediate steps:"]
        lines += [
            f"Step {i} [{step.file}:{step.line}]: {step.code_text}"
            for i, step in enumerate(ctx.intermediate, start=1)
        ]
    lines += [
        "",
        'Answer with the JSON object {"explanation": ..., "verdict": ..., '
        '"source_is_fp": ..., "sink_is_fp": ...}, explanation first.',
    ]
    return [system(_FILTER_SYSTEM), user("\n".join(lines))]


PARSE_FAILURE_NOTE = "unparseable verdict; alert kept conservatively"


def parse_verdict(text: str) -> Verdict:
    """First JSON object in the response; unparseable input keeps the alarm."""
    obj = _first_json_object(text)
    if obj is None or "verdict" not in obj:
        head = text.strip().replace("\n", " ")[:120]
        return Verdict(explanation=f"{PARSE_FAILURE_NOTE}: {head}", verdict=True)
    verdict = bool(obj.get("verdict"))
    source_fp = bool(obj.get("source_is_fp", False)) and not verdict
    sink_fp = bool(obj.get("sink_is_fp", False)) and not verdict
    return Verdict(
        explanation=str(obj.get("explanation", "")),
        verdict=verdict,
        source_is_fp=source_fp,
        sink_is_fp=sink_fp,
    )


def _first_json_object(text: str) -> Optional[dict]:
    cleaned = "\n".join(ln for ln in text.splitlines() if not ln.lstrip().startswith("```"))
    decoder = json.JSONDecoder()
    for start, ch in enumerate(cleaned):
        if ch != "{":
            continue
        try:
            value, _ = decoder.raw_decode(cleaned, start)
        except json.JSONDecodeError:
            continue
        if isinstance(value, dict):
            return value
    return None


def source_key(alert: Alert) -> tuple:
    return (alert.path.source_spec.identity(), alert.path.nodes[0])


def sink_key(alert: Alert) -> tuple:
    return (alert.path.sink_spec.identity(), alert.path.nodes[-1])


@dataclass
class FilterResult:
    kept: list[Alert]
    audit: list[dict] = field(default_factory=list)
    llm_calls: int = 0


def filter_paths(
    alerts: Sequence[Alert],
    backend: ChatBackend,
    cwe: Cwe,
    g: Optional[DataflowGraph] = None,
    resolver: Optional[SourceResolver] = None,
    segments: int = DEFAULT_SEGMENTS,
    parallel: int = 0,
) -> FilterResult:
    """Query the LLM per alert in canonical alert-id order; a false verdict
    drops the alert, and its flagged endpoint prunes every later alert
    sharing that endpoint without further LLM calls. Transport failures keep
    the alert, marked unevaluated.

    ``parallel`` > 0 queries that many alerts concurrently instead; pruning
    is disabled in that mode because its outcomes depend on query order."""
    if parallel > 0:
        return _filter_parallel(alerts, backend, cwe, g, resolver, segments, parallel)
    ordered = sorted(alerts, key=lambda a: a.id)
    pruned_sources: set[tuple] = set()
    pruned_sinks: set[tuple] = set()
    kept_ids: set[str] = set()
    audit: list[dict] = []
    calls = 0
    for alert in ordered:
        skey, tkey = source_key(alert), sink_key(alert)
        if skey in pruned_sources:
            audit.append({"alert_id": alert.id, "action": "pruned", "by": "source_fp"})
            continue
        if tkey in pruned_sinks:
            audit.append({"alert_id": alert.id, "action": "pruned", "by": "sink_fp"})
            continue
        if alert.snippets is not None:
            ctx = alert.snippets
        elif g is not None:
            ctx = build_snippet_context(alert, g, resolver, segments)
        else:
            ctx = snippet_context_from_steps(alert, segments, resolver)
        try:
            text = backend.complete(build_context_prompt(alert, cwe, ctx))
        except TransportError:
            kept_ids.add(alert.id)
            audit.append({"alert_id": alert.id, "action": "unevaluated", "by": None})
            continue
        calls += 1
        verdict = parse_verdict(text)
        alert.verdict = verdict
        if verdict.verdict:
            kept_ids.add(alert.id)
            audit.append({"alert_id": alert.id, "action": "kept", "by": "verdict"})
        else:
            audit.append({"alert_id": alert.id, "action": "dropped", "by": "verdict"})
            if verdict.source_is_fp:
                pruned_sources.add(skey)
            if verdict.sink_is_fp:
                pruned_sinks.add(tkey)
    kept = [a for a in alerts if a.id in kept_ids]
    return FilterResult(kept=kept, audit=audit, llm_calls=calls)


def _filter_parallel(
    alerts: Sequence[Alert],
    backend: ChatBackend,
    cwe: Cwe,
    g: Optional[DataflowGraph],
    resolver: Optional[SourceResolver],
    segments: int,
    workers: int,
) -> FilterResult:
    from concurrent.futures import ThreadPoolExecutor

    def evaluate(alert: Alert) -> tuple[Alert, Optional[Verdict]]:
        if alert.snippets is not None:
            ctx = alert.snippets
        elif g is not None:
            ctx = build_snippet_context(alert, g, resolver, segments)
        else:
            ctx = snippet_context_from_steps(alert, segments, resolver)
        try:
            text = backend.complete(build_context_prompt(alert, cwe, ctx))
        except TransportError:
            return alert, None
        return alert, parse_verdict(text)

    ordered = sorted(alerts, key=lambda a: a.id)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        outcomes = list(pool.map(evaluate, ordered))
    kept_ids: set[str] = set()
    audit: list[dict] = []
    calls = 0
    for alert, verdict in outcomes:
        if verdict is None:
            kept_ids.add(alert.id)
            audit.append({"alert_id": alert.id, "action": "unevaluated", "by": None})
            continue
        calls += 1
        alert.verdict = verdict
        if verdict.verdict:
            kept_ids.add(alert.id)
            audit.append({"alert_id": alert.id, "action": "kept", "by": "verdict"})
        else:
            audit.append({"alert_id": alert.id, "action": "dropped", "by": "verdict"})
    kept = [a for a in alerts if a.id in kept_ids]
    return FilterResult(kept=kept, audit=audit, llm_calls=calls)
