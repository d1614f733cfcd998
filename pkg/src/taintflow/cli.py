"""Command-line interface: analyze, label-specs, filter, evaluate, sarif, serve.

Exit codes: 0 success, 1 usage error, 2 stage failure, 3 validation failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .candidates import candidates_to_obj, extract_candidates
from .contextual import SourceResolver, filter_paths
from .core import Cwe, dump_specs
from .engine import PathLimits
from .graphio import GraphFormatError, GraphValidationError
from .labeling import label_specs
from .llm import LlmConfig
from .metrics import (
    ManifestFormatError,
    ManifestValidationError,
    compute_metrics,
    load_manifest,
    metrics_table,
)
from .pipeline import (
    RunConfig,
    StageError,
    _load_graph,
    alert_to_obj,
    load_alerts_file,
    make_backend,
    run_analyze,
)
from .sarif import emit_sarif
from .server import serve_api

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_STAGE = 2
EXIT_VALIDATION = 3

_VALIDATION_ERRORS = (
    GraphFormatError,
    GraphValidationError,
    ManifestFormatError,
    ManifestValidationError,
)


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_llm_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--llm",
        help="LLM selector: 'mock:<rules-file>' or a model id for the HTTP backend",
    )
    parser.add_argument("--base-url", default="https://api.openai.com/v1")
    parser.add_argument("--api-key-env", default="LLM_API_KEY")
    parser.add_argument("--seed", type=int, default=None)


def _backend_from_args(args: argparse.Namespace):
    if not args.llm:
        return None
    cfg = LlmConfig(base_url=args.base_url, api_key_env=args.api_key_env, seed=args.seed)
    return make_backend(args.llm, cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="taintflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="run the full pipeline on one project")
    p_analyze.add_argument("--project", required=True, type=Path)
    p_analyze.add_argument("--cwe", required=True, choices=[c.value for c in Cwe])
    p_analyze.add_argument("--out", required=True, type=Path)
    p_analyze.add_argument("--spec-file", action="append", default=[], type=Path)
    p_analyze.add_argument("--sanitizer-file", action="append", default=[], type=Path)
    p_analyze.add_argument("--skip-filter", action="store_true")
    p_analyze.add_argument("--no-throw-edges", action="store_true")
    p_analyze.add_argument("--max-paths-per-pair", type=int, default=1)
    p_analyze.add_argument("--max-total-paths", type=int, default=1000)
    p_analyze.add_argument("--max-length", type=int, default=80)
    p_analyze.add_argument("--candidates-out", type=Path)
    _add_llm_flags(p_analyze)

    p_label = sub.add_parser("label-specs", help="infer taint specs for one project")
    p_label.add_argument("--project", required=True, type=Path)
    p_label.add_argument("--cwe", required=True, choices=[c.value for c in Cwe])
    p_label.add_argument("--specs-out", required=True, type=Path)
    p_label.add_argument("--candidates-out", type=Path)
    _add_llm_flags(p_label)

    p_filter = sub.add_parser("filter", help="contextual false-positive filtering of alerts")
    p_filter.add_argument("--alerts", required=True, type=Path)
    p_filter.add_argument("--project", type=Path, help="project root for code snippets")
    p_filter.add_argument("--out", required=True, type=Path)
    _add_llm_flags(p_filter)

    p_eval = sub.add_parser("evaluate", help="compute detection metrics over a dataset")
    p_eval.add_argument("--manifest", required=True, type=Path)
    p_eval.add_argument("--results-dir", required=True, type=Path)
    p_eval.add_argument("--metrics-out", type=Path)

    p_sarif = sub.add_parser("sarif", help="emit a SARIF 2.1.0 report")
    p_sarif.add_argument("--alerts", required=True, type=Path)
    p_sarif.add_argument("--out", required=True, type=Path)

    p_serve = sub.add_parser("serve", help="serve the triage API (and UI, if built)")
    p_serve.add_argument("--results-dir", required=True, type=Path)
    p_serve.add_argument("--bind", default="127.0.0.1:8731")
    p_serve.add_argument("--ui", type=Path)
    p_serve.add_argument("--alerts-file", type=Path)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _dispatch(args)
    except _VALIDATION_ERRORS as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except StageError as exc:
        if isinstance(exc.cause, _VALIDATION_ERRORS):
            print(f"validation failure: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except Exception as exc:  # surface anything else as a stage failure
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


def _dispatch(args: argparse.Namespace) -> int:
    if args.command == "analyze":
        return _cmd_analyze(args)
    if args.command == "label-specs":
        return _cmd_label_specs(args)
    if args.command == "filter":
        return _cmd_filter(args)
    if args.command == "evaluate":
        return _cmd_evaluate(args)
    if args.command == "sarif":
        return _cmd_sarif(args)
    if args.command == "serve":
        return _cmd_serve(args)
    raise AssertionError(f"unhandled command {args.command}")


def _cmd_analyze(args: argparse.Namespace) -> int:
    cfg = RunConfig(
        project_root=args.project,
        cwe=Cwe(args.cwe),
        output_dir=args.out,
        backend=_backend_from_args(args),
        limits=PathLimits(
            max_paths_per_pair=args.max_paths_per_pair,
            max_total_paths=args.max_total_paths,
            max_length=args.max_length,
        ),
        spec_files=list(args.spec_file),
        skip_filter=args.skip_filter,
        include_exceptional=not args.no_throw_edges,
        extra_sanitizer_files=list(args.sanitizer_file),
    )
    result = run_analyze(cfg)
    if args.candidates_out:
        _write_json(args.candidates_out, candidates_to_obj(result.candidates))
    filtered = "" if result.filter_result is None else f", kept {len(result.kept)} after filtering"
    print(
        f"{cfg.project_name} [{cfg.cwe.value}]: {len(result.alerts)} alert(s){filtered}; "
        f"artifacts in {cfg.output_dir}"
    )
    return EXIT_OK


def _cmd_label_specs(args: argparse.Namespace) -> int:
    backend = _backend_from_args(args)
    if backend is None:
        print("label-specs requires --llm", file=sys.stderr)
        return EXIT_USAGE
    graph = _load_graph(args.project)
    cands = extract_candidates(graph)
    if args.candidates_out:
        _write_json(args.candidates_out, candidates_to_obj(cands))
    specs = label_specs(cands, backend, Cwe(args.cwe))
    with open(args.specs_out, "w", encoding="utf-8") as fp:
        dump_specs(specs.all_specs(), fp)
    print(f"wrote {len(specs.all_specs())} spec(s) to {args.specs_out}")
    return EXIT_OK


def _cmd_filter(args: argparse.Namespace) -> int:
    backend = _backend_from_args(args)
    if backend is None:
        print("filter requires --llm", file=sys.stderr)
        return EXIT_USAGE
    meta, alerts = load_alerts_file(args.alerts)
    cwe = Cwe(meta["cwe"])
    resolver = SourceResolver(args.project) if args.project else None
    result = filter_paths(alerts, backend, cwe, g=None, resolver=resolver)
    args.out.mkdir(parents=True, exist_ok=True)
    payload = {"meta": meta, "alerts": [alert_to_obj(a) for a in result.kept]}
    _write_json(args.out / "filtered_alerts.json", payload)
    with open(args.out / "filter_audit.jsonl", "w", encoding="utf-8") as fp:
        for record in result.audit:
            fp.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"kept {len(result.kept)}/{len(alerts)} alert(s) with {result.llm_calls} LLM call(s)")
    return EXIT_OK


def _cmd_evaluate(args: argparse.Namespace) -> int:
    with open(args.manifest, "r", encoding="utf-8") as fp:
        manifest = load_manifest(fp)
    results = {}
    for label in manifest.projects:
        project_dir = args.results_dir / label.project_id
        alerts_path = None
        for name in ("filtered_alerts.json", "alerts.json"):
            candidate = project_dir / name
            if candidate.is_file():
                alerts_path = candidate
                break
        if alerts_path is None:
            raise FileNotFoundError(f"no alerts file for project {label.project_id} under {project_dir}")
        _meta, alerts = load_alerts_file(alerts_path)
        results[label.project_id] = (alerts, label)
    report = compute_metrics(results)
    table = metrics_table(results, report)
    print(table)
    out_path = args.metrics_out or (args.results_dir / "metrics.json")
    _write_json(out_path, report.to_obj())
    return EXIT_OK


def _cmd_sarif(args: argparse.Namespace) -> int:
    _meta, alerts = load_alerts_file(args.alerts)
    document = emit_sarif(alerts)
    _write_json(args.out, document)
    print(f"wrote {len(alerts)} result(s) to {args.out}")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    host, _, port = args.bind.partition(":")
    serve_api(
        args.results_dir,
        (host or "127.0.0.1", int(port or "8731")),
        ui_dir=args.ui,
        alerts_file=args.alerts_file,
    )
    return EXIT_OK


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fp:
        json.dump(payload, fp, indent=2, sort_keys=True)
        fp.write("\n")


if __name__ == "__main__":
    sys.exit(main())
