"""Candidate extraction: which APIs and parameters are worth asking about.

External candidates are distinct invoked external APIs (return value as a
potential source when non-void, every observed argument position as a
potential sink, the receiver included as position -1). Internal candidates
are parameters of public functions that some test-file code invokes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .core import ApiSignature, DataflowGraph, Visibility, function_api

DEFAULT_SKIP_PACKAGES = ("org.junit", "org.hamcrest", "org.mockito")


@dataclass(frozen=True)
class FilterConfig:
    skip_packages: tuple[str, ...] = DEFAULT_SKIP_PACKAGES
    test_path_marker: str = "src/test"

    def __post_init__(self) -> None:
        if any(not p for p in self.skip_packages):
            raise ValueError("skip-package prefixes must be non-empty")

    def skips(self, package: str) -> bool:
        return any(package == p or package.startswith(p + ".") for p in self.skip_packages)

    def is_test_path(self, path: str) -> bool:
        return f"/{self.test_path_marker}/" in f"/{path}/"


@dataclass(frozen=True)
class ExternalCandidate:
    api: ApiSignature
    may_be_source: bool
    sink_positions: tuple[int, ...]
    occurrence_count: int


@dataclass(frozen=True)
class InternalParamCandidate:
    function: str
    position: int
    param_name: str
    doc: Optional[str] = None
    # API identity of the enclosing function, used when the label becomes a
    # Parameter spec.
    api: Optional[ApiSignature] = None


def extract_external(g: DataflowGraph, cfg: FilterConfig = FilterConfig()) -> list[ExternalCandidate]:
    """One candidate per distinct external API, skip-list applied, canonically sorted."""
    grouped: dict[tuple, dict] = {}
    for call in g.calls:
        api = call.callee
        if not api.is_external or cfg.skips(api.package):
            continue
        entry = grouped.setdefault(
            api.key(), {"api": api, "source": False, "positions": set(), "count": 0}
        )
        entry["count"] += 1
        if call.result_node is not None:
            entry["source"] = True
        entry["positions"].update(call.arg_nodes.keys())
    out = [
        ExternalCandidate(
            api=entry["api"],
            may_be_source=entry["source"],
            sink_positions=tuple(sorted(entry["positions"])),
            occurrence_count=entry["count"],
        )
        for entry in grouped.values()
    ]
    out.sort(key=lambda c: (c.api.package, c.api.class_name, c.api.method, c.api.signature))
    return out


def extract_internal(g: DataflowGraph, cfg: FilterConfig = FilterConfig()) -> list[InternalParamCandidate]:
    """Parameters of public functions invoked from test-file code, canonically sorted."""
    test_invoked: set[str] = set()
    for call in g.calls:
        if call.callee.is_external:
            continue
        site_nodes = list(call.arg_nodes.values())
        if call.result_node is not None:
            site_nodes.append(call.result_node)
        if any(cfg.is_test_path(g.node(n).file) for n in site_nodes if n in g.nodes):
            test_invoked.add(call.callee.method)
    out: list[InternalParamCandidate] = []
    for fn in g.functions:
        if fn.visibility is not Visibility.PUBLIC or fn.name not in test_invoked:
            continue
        api = function_api(fn)
        for position in range(len(fn.param_nodes)):
            out.append(
                InternalParamCandidate(
                    function=fn.name,
                    position=position,
                    param_name=fn.param_name(position),
                    api=api,
                )
            )
    out.sort(key=lambda c: (c.function, c.position))
    return out


@dataclass
class CandidateSet:
    """Bundle of both candidate kinds for one project graph."""

    external: list[ExternalCandidate] = field(default_factory=list)
    internal: list[InternalParamCandidate] = field(default_factory=list)


def extract_candidates(g: DataflowGraph, cfg: FilterConfig = FilterConfig()) -> CandidateSet:
    return CandidateSet(external=extract_external(g, cfg), internal=extract_internal(g, cfg))


def candidates_to_obj(cands: CandidateSet) -> dict:
    return {
        "external": [
            {
                "package": c.api.package,
                "class": c.api.class_name,
                "method": c.api.method,
                "signature": list(c.api.signature),
                "may_be_source": c.may_be_source,
                "sink_positions": list(c.sink_positions),
                "occurrence_count": c.occurrence_count,
            }
            for c in cands.external
        ],
        "internal": [
            {
                "function": c.function,
                "position": c.position,
                "param_name": c.param_name,
                "doc": c.doc,
            }
            for c in cands.internal
        ],
    }
