"""Line-delimited graph interchange (dfg.jsonl): validating reader and writer.

External extractors can feed pre-built graphs through this format instead of
going through the MiniLang frontend.
"""
from __future__ import annotations

import json
from typing import IO, Iterable

from .core import (
    CallRecord,
    DataflowGraph,
    DfgEdge,
    DfgNode,
    EdgeKind,
    FunctionRecord,
    Visibility,
    api_from_obj,
    node_from_record,
    validate_graph,
    write_graph_jsonl,
)

__all__ = ["GraphFormatError", "GraphValidationError", "load_graph_jsonl", "save_graph_jsonl"]


class GraphFormatError(Exception):
    def __init__(self, message: str, line_no: int) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class GraphValidationError(Exception):
    def __init__(self, violations: list[str]) -> None:
        super().__init__("; ".join(violations))
        self.violations = violations


def load_graph_jsonl(stream: IO[str] | Iterable[str]) -> DataflowGraph:
    """Parse node/edge/call/function records and return a validated graph."""
    nodes: dict[int, DfgNode] = {}
    edges: list[DfgEdge] = []
    calls: list[CallRecord] = []
    functions: list[FunctionRecord] = []
    violations: list[str] = []
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise GraphFormatError(f"invalid JSON ({exc.msg})", line_no) from exc
        if not isinstance(rec, dict) or "rec" not in rec:
            raise GraphFormatError("record must be an object with a 'rec' field", line_no)
        kind = rec["rec"]
        try:
            if kind == "node":
                node = node_from_record(rec)
                if node.id in nodes:
                    violations.append(f"duplicate node id {node.id}")
                nodes[node.id] = node
            elif kind == "edge":
                edges.append(DfgEdge(int(rec["src"]), int(rec["dst"]), EdgeKind(rec["kind"])))
            elif kind == "call":
                callee = api_from_obj(rec["callee"])
                arg_nodes = {int(pos): int(nid) for pos, nid in rec.get("arg_nodes", {}).items()}
                result = rec.get("result_node")
                calls.append(
                    CallRecord(
                        call_id=str(rec["call_id"]),
                        callee=callee,
                        arg_nodes=arg_nodes,
                        result_node=int(result) if result is not None else None,
                    )
                )
            elif kind == "function":
                functions.append(
                    FunctionRecord(
                        name=rec["name"],
                        visibility=Visibility(rec.get("visibility", "Private")),
                        param_nodes=tuple(int(n) for n in rec.get("param_nodes", [])),
                        defined_in_file=rec.get("defined_in_file", ""),
                        param_names=tuple(rec.get("param_names", [])),
                    )
                )
            else:
                raise GraphFormatError(f"unknown record kind {kind!r}", line_no)
        except GraphFormatError:
            raise
        except (KeyError, ValueError, TypeError) as exc:
            raise GraphFormatError(f"malformed {kind} record: {exc}", line_no) from exc
    graph = DataflowGraph(nodes, edges, calls, functions)
    violations.extend(validate_graph(graph))
    if violations:
        raise GraphValidationError(violations)
    return graph


def save_graph_jsonl(graph: DataflowGraph, fp: IO[str]) -> None:
    write_graph_jsonl(graph, fp)
