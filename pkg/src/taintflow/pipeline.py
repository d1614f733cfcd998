"""Pipeline orchestration: extract, infer, analyze, filter, and the on-disk
artifact formats shared by the CLI, the evaluation harness, and the triage
server."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from .candidates import CandidateSet, FilterConfig, candidates_to_obj, extract_candidates
from .contextual import FilterResult, SourceResolver, filter_paths
from .core import (
    Alert,
    Cwe,
    DataflowGraph,
    PathStep,
    Role,
    TaintPath,
    TaintSpec,
    Triage,
    Verdict,
    load_specs,
    make_alert,
    spec_from_obj,
    spec_to_obj,
)
from .engine import PathLimits, resolve_specs, unsanitized_paths
from .graphio import load_graph_jsonl
from .labeling import LabeledSpecs, label_specs, split_specs_by_role
from .llm import ChatBackend, HttpChatBackend, LlmConfig
from .minilang import build_dfg, load_project, parse
from .mockllm import MockChatBackend


class StageError(Exception):
    """Failure attributed to one pipeline stage; partial artifacts survive."""

    def __init__(self, stage: str, cause: Exception) -> None:
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    project_root: Path
    cwe: Cwe
    output_dir: Path
    backend: Optional[ChatBackend] = None
    limits: PathLimits = field(default_factory=PathLimits)
    spec_files: list[Path] = field(default_factory=list)
    skip_filter: bool = False
    include_exceptional: bool = True
    filter_cfg: FilterConfig = field(default_factory=FilterConfig)
    extra_sanitizer_files: list[Path] = field(default_factory=list)

    @property
    def project_name(self) -> str:
        return self.project_root.name


def make_backend(selector: str, cfg: Optional[LlmConfig] = None) -> ChatBackend:
    """``mock:<rules-file>`` selects the hermetic backend; anything else is a
    model id for the HTTP backend."""
    if selector.startswith("mock:"):
        return MockChatBackend.from_file(selector[len("mock:") :])
    base = cfg or LlmConfig()
    return HttpChatBackend(
        LlmConfig(
            base_url=base.base_url,
            model_id=selector,
            temperature=base.temperature,
            max_tokens=base.max_tokens,
            top_p=base.top_p,
            seed=base.seed,
            api_key_env=base.api_key_env,
            retries=base.retries,
            backoff_ms=base.backoff_ms,
        )
    )


def default_sanitizers(cwe: Cwe) -> list[TaintSpec]:
    text = resources.files("taintflow.data").joinpath("sanitizers.json").read_text("utf-8")
    return [s for s in (spec_from_obj(o) for o in json.loads(text)) if s.cwe == cwe]


@dataclass
class AnalyzeResult:
    graph: DataflowGraph
    candidates: CandidateSet
    specs: LabeledSpecs
    alerts: list[Alert]
    kept: list[Alert]
    truncated: bool
    filter_result: Optional[FilterResult] = None


def run_analyze(cfg: RunConfig) -> AnalyzeResult:
    """Execute the full pipeline for one (project, CWE) and write artifacts."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    try:
        graph = _load_graph(cfg.project_root)
    except Exception as exc:
        raise StageError("frontend", exc) from exc

    try:
        cands = extract_candidates(graph, cfg.filter_cfg)
        _write_json(cfg.output_dir / "candidates.json", candidates_to_obj(cands))
    except Exception as exc:
        raise StageError("candidates", exc) from exc

    try:
        if cfg.spec_files:
            loaded: list[TaintSpec] = []
            for path in cfg.spec_files:
                with open(path, "r", encoding="utf-8") as fp:
                    loaded.extend(load_specs(fp))
            specs = split_specs_by_role(loaded, cfg.cwe)
            sanitizers = [s for s in loaded if s.cwe == cfg.cwe and s.role is Role.SANITIZER]
        else:
            if cfg.backend is None:
                raise ValueError("no spec files given and no LLM backend selected")
            specs = label_specs(cands, cfg.backend, cfg.cwe, readme=_read_readme(cfg.project_root))
            sanitizers = []
        sanitizers += default_sanitizers(cfg.cwe)
        for path in cfg.extra_sanitizer_files:
            with open(path, "r", encoding="utf-8") as fp:
                sanitizers.extend(s for s in load_specs(fp) if s.cwe == cfg.cwe)
        _write_json(cfg.output_dir / "specs.json", specs.to_obj())
    except StageError:
        raise
    except Exception as exc:
        raise StageError("label-specs", exc) from exc

    try:
        endpoints = resolve_specs(graph, specs.all_specs() + sanitizers)
        search = unsanitized_paths(graph, endpoints, cfg.limits, cfg.include_exceptional)
        alerts = [make_alert(cfg.project_name, p, graph) for p in search.paths]
        _write_alerts_file(
            cfg.output_dir / "alerts.json", cfg, alerts, search.truncated, specs
        )
    except Exception as exc:
        raise StageError("taint-engine", exc) from exc

    filter_result: Optional[FilterResult] = None
    kept = alerts
    if not cfg.skip_filter and cfg.backend is not None:
        try:
            resolver = SourceResolver(cfg.project_root)
            filter_result = filter_paths(alerts, cfg.backend, cfg.cwe, graph, resolver)
            kept = filter_result.kept
            with open(cfg.output_dir / "filter_audit.jsonl", "w", encoding="utf-8") as fp:
                for record in filter_result.audit:
                    fp.write(json.dumps(record, sort_keys=True) + "\n")
        except Exception as exc:
            raise StageError("ctx-filter", exc) from exc
    _write_alerts_file(
        cfg.output_dir / "filtered_alerts.json", cfg, kept, search.truncated, specs
    )
    return AnalyzeResult(
        graph=graph,
        candidates=cands,
        specs=specs,
        alerts=alerts,
        kept=kept,
        truncated=search.truncated,
        filter_result=filter_result,
    )


def _load_graph(root: Path) -> DataflowGraph:
    jsonl = root / "dfg.jsonl"
    if jsonl.is_file():
        with open(jsonl, "r", encoding="utf-8") as fp:
            return load_graph_jsonl(fp)
    files = load_project(str(root))
    if not files:
        raise FileNotFoundError(f"no .ml sources and no dfg.jsonl under {root}")
    return build_dfg(parse(files))


def _read_readme(root: Path) -> Optional[str]:
    for name in ("README.md", "README.txt", "README"):
        path = root / name
        if path.is_file():
            return path.read_text(encoding="utf-8")
    return None


# --- alert (de)serialization ------------------------------------------------

def alert_to_obj(alert: Alert) -> dict:
    obj: dict = {
        "id": alert.id,
        "project": alert.project,
        "cwe": alert.path.cwe.value,
        "path": {
            "nodes": list(alert.path.nodes),
            "source_spec": spec_to_obj(alert.path.source_spec),
            "sink_spec": spec_to_obj(alert.path.sink_spec),
        },
        "steps": [
            {
                "node_id": s.node_id,
                "file": s.file,
                "line": s.line,
                "column": s.column,
                "function": s.function,
                "code": s.code,
            }
            for s in alert.steps
        ],
        "triage": alert.triage.value,
    }
    if alert.verdict is not None:
        obj["verdict"] = {
            "explanation": alert.verdict.explanation,
            "verdict": alert.verdict.verdict,
            "source_is_fp": alert.verdict.source_is_fp,
            "sink_is_fp": alert.verdict.sink_is_fp,
        }
    return obj


def alert_from_obj(obj: dict) -> Alert:
    path = TaintPath(
        nodes=tuple(obj["path"]["nodes"]),
        source_spec=spec_from_obj(obj["path"]["source_spec"]),
        sink_spec=spec_from_obj(obj["path"]["sink_spec"]),
        cwe=Cwe(obj["cwe"]),
    )
    steps = tuple(
        PathStep(
            node_id=s["node_id"],
            file=s["file"],
            line=s["line"],
            column=s.get("column", 1),
            function=s.get("function", ""),
            code=s.get("code", ""),
        )
        for s in obj["steps"]
    )
    verdict = None
    if obj.get("verdict") is not None:
        v = obj["verdict"]
        verdict = Verdict(
            explanation=v.get("explanation", ""),
            verdict=bool(v["verdict"]),
            source_is_fp=bool(v.get("source_is_fp", False)),
            sink_is_fp=bool(v.get("sink_is_fp", False)),
        )
    return Alert(
        id=obj["id"],
        project=obj.get("project", ""),
        path=path,
        steps=steps,
        verdict=verdict,
        triage=Triage(obj.get("triage", "Unreviewed")),
    )


def _write_alerts_file(
    path: Path, cfg: RunConfig, alerts: list[Alert], truncated: bool, specs: LabeledSpecs
) -> None:
    payload = {
        "meta": {
            "project": cfg.project_name,
            "cwe": cfg.cwe.value,
            "truncated": truncated,
            "spec_counts": specs.counts(),
        },
        "alerts": [alert_to_obj(a) for a in alerts],
    }
    _write_json(path, payload)


def load_alerts_file(path: Path) -> tuple[dict, list[Alert]]:
    with open(path, "r", encoding="utf-8") as fp:
        payload = json.load(fp)
    return payload.get("meta", {}), [alert_from_obj(o) for o in payload.get("alerts", [])]


def _write_json(path: Path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")
