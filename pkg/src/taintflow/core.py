"""Shared data model: dataflow graphs, taint specifications, paths, and alerts.

Everything downstream (candidate extraction, spec inference, the path engine,
filtering, metrics, reporting) works over the types defined here. Graphs are
immutable after construction and safe to share between threads.
"""
from __future__ import annotations

import hashlib
import json
import posixpath
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Iterable, Optional, Sequence

NodeId = int


class NodeKind(str, Enum):
    CALL_RESULT = "CallResult"
    ARGUMENT = "Argument"
    PARAMETER = "Parameter"
    LOCAL_DEF = "LocalDef"
    LITERAL = "Literal"
    VAR_USE = "VarUse"
    CONCAT = "Concat"
    RETURN = "Return"
    CATCH_PARAM = "CatchParam"
    THROW_VALUE = "ThrowValue"


class EdgeKind(str, Enum):
    DATA = "Data"
    CONTROL = "Control"
    EXCEPTIONAL = "Exceptional"


class Visibility(str, Enum):
    PUBLIC = "Public"
    PRIVATE = "Private"


class SpecNodeType(str, Enum):
    RETURN_VALUE = "ReturnValue"
    ARGUMENT = "Argument"
    PARAMETER = "Parameter"


class Role(str, Enum):
    SOURCE = "Source"
    SINK = "Sink"
    TAINT_PROPAGATOR = "TaintPropagator"
    SANITIZER = "Sanitizer"


class Cwe(str, Enum):
    CWE22 = "CWE-22"
    CWE78 = "CWE-78"
    CWE79 = "CWE-79"
    CWE94 = "CWE-94"


class Triage(str, Enum):
    UNREVIEWED = "Unreviewed"
    TRUE_POSITIVE = "TruePositive"
    FALSE_POSITIVE = "FalsePositive"


# Argument position -1 encodes the implicit receiver of an instance call;
# explicit arguments are 0-based.
RECEIVER_POSITION = -1


@dataclass(frozen=True)
class DfgNode:
    """One program point: an expression or statement participating in dataflow."""

    id: NodeId
    kind: NodeKind
    file: str
    line: int
    column: int
    enclosing_function: str
    code_text: str
    position: Optional[int] = None  # Argument / Parameter index
    call_id: Optional[str] = None  # CallResult / Argument owner
    function_id: Optional[str] = None  # Parameter owner


@dataclass(frozen=True)
class DfgEdge:
    src: NodeId
    dst: NodeId
    kind: EdgeKind


@dataclass(frozen=True)
class ApiSignature:
    """Identity of an API: package, class, method, and parameter-type tuple.

    ``position`` is only set on signatures embedded in taint specs that target
    a specific argument or parameter (-1 means the receiver).
    """

    package: str
    class_name: str
    method: str
    signature: tuple[str, ...] = ()
    position: Optional[int] = None
    is_external: bool = True

    def key(self) -> tuple[str, str, str, tuple[str, ...]]:
        """Matching identity: exact, case-sensitive, overloads disambiguated
        by the full signature tuple."""
        return (self.package, self.class_name, self.method, self.signature)

    def display(self) -> str:
        return f"{self.package}.{self.class_name}.{self.method}({','.join(self.signature)})"

    def with_position(self, position: Optional[int]) -> "ApiSignature":
        return ApiSignature(
            self.package, self.class_name, self.method, self.signature, position, self.is_external
        )


@dataclass(frozen=True)
class TaintSpec:
    """A taint specification: node type to match, API identity, role, and CWE."""

    node_type: SpecNodeType
    api: ApiSignature
    role: Role
    cwe: Cwe

    def __post_init__(self) -> None:
        if self.node_type is SpecNodeType.RETURN_VALUE and self.api.position is not None:
            raise ValueError("ReturnValue spec must not carry a position")
        if self.node_type in (SpecNodeType.ARGUMENT, SpecNodeType.PARAMETER) and self.api.position is None:
            raise ValueError(f"{self.node_type.value} spec requires a position")

    def identity(self) -> tuple:
        """Canonical spec identity, used for dedup and corpus statistics."""
        return (self.node_type.value, self.api.key(), self.api.position, self.role.value, self.cwe.value)


@dataclass(frozen=True)
class CallRecord:
    call_id: str
    callee: ApiSignature
    arg_nodes: dict[int, NodeId]
    result_node: Optional[NodeId] = None

    def __hash__(self) -> int:  # arg_nodes is a dict; hash on identity fields
        return hash((self.call_id, self.callee))


@dataclass(frozen=True)
class FunctionRecord:
    name: str
    visibility: Visibility
    param_nodes: tuple[NodeId, ...]
    defined_in_file: str
    param_names: tuple[str, ...] = ()

    def param_name(self, position: int) -> str:
        if 0 <= position < len(self.param_names):
            return self.param_names[position]
        return f"p{position}"


def function_api(fn: FunctionRecord) -> ApiSignature:
    """API identity of a project-internal function.

    The defining file stands in for the class (its stem) and package (its
    directory path with dots); functions have string-typed parameters only.
    """
    directory = posixpath.dirname(fn.defined_in_file)
    package = directory.replace("/", ".") if directory else "."
    stem = posixpath.basename(fn.defined_in_file)
    if "." in stem:
        stem = stem.rsplit(".", 1)[0]
    return ApiSignature(
        package=package,
        class_name=stem or ".",
        method=fn.name,
        signature=("String",) * len(fn.param_nodes),
        is_external=False,
    )


class DataflowGraph:
    """Immutable interprocedural dataflow graph.

    Construct once (via the frontend builders or the JSONL loader), then share
    freely: all accessors are read-only.
    """

    def __init__(
        self,
        nodes: dict[NodeId, DfgNode],
        edges: Sequence[DfgEdge],
        calls: Sequence[CallRecord] = (),
        functions: Sequence[FunctionRecord] = (),
    ) -> None:
        self.nodes: dict[NodeId, DfgNode] = dict(nodes)
        self.edges: tuple[DfgEdge, ...] = tuple(edges)
        self.calls: tuple[CallRecord, ...] = tuple(calls)
        self.functions: tuple[FunctionRecord, ...] = tuple(functions)
        self._calls_by_id = {c.call_id: c for c in self.calls}
        self._functions_by_name = {f.name: f for f in self.functions}

    def node(self, node_id: NodeId) -> DfgNode:
        return self.nodes[node_id]

    def call(self, call_id: str) -> Optional[CallRecord]:
        return self._calls_by_id.get(call_id)

    def function(self, name: str) -> Optional[FunctionRecord]:
        return self._functions_by_name.get(name)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DataflowGraph):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.calls == other.calls
            and self.functions == other.functions
        )


def validate_graph(g: DataflowGraph) -> list[str]:
    """Check structural invariants; returns [] when the graph is well formed.

    Violations are data, not failures: every problem is reported with the
    offending identifier.
    """
    violations: list[str] = []
    for node_id, node in g.nodes.items():
        if node.id != node_id:
            violations.append(f"node id mismatch: keyed {node_id}, node says {node.id}")
        if node.line < 1:
            violations.append(f"node {node_id}: line must be >= 1")
        if node.kind is NodeKind.ARGUMENT and (node.position is None or node.position < RECEIVER_POSITION):
            violations.append(f"node {node_id}: argument position must be >= -1")
    for edge in g.edges:
        if edge.src not in g.nodes or edge.dst not in g.nodes:
            violations.append(f"dangling edge {edge.src}->{edge.dst}")
        elif edge.src == edge.dst and edge.kind is EdgeKind.DATA:
            violations.append(f"data self-loop at node {edge.src}")
    seen_calls: set[str] = set()
    for call in g.calls:
        if call.call_id in seen_calls:
            violations.append(f"duplicate call id {call.call_id}")
        seen_calls.add(call.call_id)
        for pos, node_id in call.arg_nodes.items():
            if node_id not in g.nodes:
                violations.append(f"call {call.call_id}: arg {pos} names unknown node {node_id}")
        if call.result_node is not None and call.result_node not in g.nodes:
            violations.append(f"call {call.call_id}: result names unknown node {call.result_node}")
    seen_functions: set[str] = set()
    for fn in g.functions:
        if fn.name in seen_functions:
            violations.append(f"duplicate function {fn.name}")
        seen_functions.add(fn.name)
        for node_id in fn.param_nodes:
            if node_id not in g.nodes:
                violations.append(f"function {fn.name}: param names unknown node {node_id}")
    return violations


def match_spec(spec: TaintSpec, node: DfgNode, g: DataflowGraph) -> bool:
    """True iff ``node`` is matched by ``spec`` in ``g``.

    Matching is exact string equality on the full API identity; the spec's
    role never influences matching.
    """
    if spec.node_type is SpecNodeType.RETURN_VALUE:
        if node.kind is not NodeKind.CALL_RESULT or node.call_id is None:
            return False
        call = g.call(node.call_id)
        return call is not None and call.callee.key() == spec.api.key()
    if spec.node_type is SpecNodeType.ARGUMENT:
        if node.kind is not NodeKind.ARGUMENT or node.call_id is None:
            return False
        if node.position != spec.api.position:
            return False
        call = g.call(node.call_id)
        return call is not None and call.callee.key() == spec.api.key()
    # Parameter of a project-internal function.
    if node.kind is not NodeKind.PARAMETER or node.function_id is None:
        return False
    if node.position != spec.api.position:
        return False
    fn = g.function(node.function_id)
    return fn is not None and function_api(fn).key() == spec.api.key()


@dataclass(frozen=True)
class TaintPath:
    """Source-to-sink node sequence found by the path engine."""

    nodes: tuple[NodeId, ...]
    source_spec: TaintSpec
    sink_spec: TaintSpec
    cwe: Cwe

    def __post_init__(self) -> None:
        if len(self.nodes) < 2:
            raise ValueError("a taint path has at least a source and a sink")


@dataclass(frozen=True)
class PathStep:
    """Resolved location of one path node, embedded in alerts so reports and
    the triage server need no graph access."""

    node_id: NodeId
    file: str
    line: int
    column: int
    function: str
    code: str


@dataclass(frozen=True)
class Snippet:
    text: str
    marked_line: int
    start_line: int


@dataclass(frozen=True)
class Enclosing:
    function: str
    module: str


@dataclass(frozen=True)
class IntermediateStep:
    file: str
    line: int
    code_text: str


@dataclass(frozen=True)
class SnippetContext:
    """Code context around one alert: clipped source/sink windows plus the
    selected intermediate steps."""

    source_snippet: Snippet
    sink_snippet: Snippet
    source_enclosing: Enclosing
    sink_enclosing: Enclosing
    intermediate: tuple[IntermediateStep, ...] = ()


@dataclass
class Verdict:
    """Contextual-analysis outcome for one alert."""

    explanation: str
    verdict: bool
    source_is_fp: bool = False
    sink_is_fp: bool = False

    def __post_init__(self) -> None:
        if self.verdict and (self.source_is_fp or self.sink_is_fp):
            raise ValueError("a true verdict cannot flag the source or sink as false positive")


@dataclass
class Alert:
    """One reported unsanitized path, with triage state."""

    id: str
    project: str
    path: TaintPath
    steps: tuple[PathStep, ...]
    snippets: Optional[SnippetContext] = None
    verdict: Optional[Verdict] = None
    triage: Triage = Triage.UNREVIEWED


def alert_id(project: str, path: TaintPath, g: DataflowGraph) -> str:
    """Deterministic alert identifier: hash of project, CWE, and the path's
    node identities. Stable across runs so triage keys survive re-analysis."""
    payload = {
        "project": project,
        "cwe": path.cwe.value,
        "source": _node_identity(g.node(path.nodes[0])),
        "sink": _node_identity(g.node(path.nodes[-1])),
        "nodes": [_node_identity(g.node(n)) for n in path.nodes],
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def _node_identity(node: DfgNode) -> list:
    return [node.file, node.line, node.column, node.kind.value, node.position]


def make_alert(project: str, path: TaintPath, g: DataflowGraph) -> Alert:
    steps = tuple(
        PathStep(
            node_id=n,
            file=g.node(n).file,
            line=g.node(n).line,
            column=g.node(n).column,
            function=g.node(n).enclosing_function,
            code=g.node(n).code_text,
        )
        for n in path.nodes
    )
    return Alert(id=alert_id(project, path, g), project=project, path=path, steps=steps)


# ---------------------------------------------------------------------------
# Spec file format: JSON array, one object per spec. Canonical ordering is
# (package, class, method, node_type, position).
# ---------------------------------------------------------------------------

def spec_to_obj(spec: TaintSpec) -> dict:
    obj = {
        "node_type": spec.node_type.value,
        "package": spec.api.package,
        "class": spec.api.class_name,
        "method": spec.api.method,
        "signature": list(spec.api.signature),
        "role": spec.role.value,
        "cwe": spec.cwe.value,
    }
    if spec.api.position is not None:
        obj["position"] = spec.api.position
    return obj


def spec_from_obj(obj: dict) -> TaintSpec:
    api = ApiSignature(
        package=obj["package"],
        class_name=obj["class"],
        method=obj["method"],
        signature=tuple(obj.get("signature", [])),
        position=obj.get("position"),
        is_external=bool(obj.get("is_external", True)),
    )
    return TaintSpec(
        node_type=SpecNodeType(obj["node_type"]),
        api=api,
        role=Role(obj["role"]),
        cwe=Cwe(obj["cwe"]),
    )


def spec_sort_key(spec: TaintSpec) -> tuple:
    pos = spec.api.position
    return (
        spec.api.package,
        spec.api.class_name,
        spec.api.method,
        spec.node_type.value,
        pos if pos is not None else RECEIVER_POSITION - 1,
        spec.api.signature,
        spec.role.value,
    )


def sort_specs(specs: Iterable[TaintSpec]) -> list[TaintSpec]:
    return sorted(specs, key=spec_sort_key)


def dump_specs(specs: Iterable[TaintSpec], fp: IO[str]) -> None:
    json.dump([spec_to_obj(s) for s in sort_specs(specs)], fp, indent=2, sort_keys=True)
    fp.write("\n")


def load_specs(fp: IO[str]) -> list[TaintSpec]:
    data = json.load(fp)
    if not isinstance(data, list):
        raise ValueError("spec file must hold a JSON array")
    return [spec_from_obj(obj) for obj in data]


# ---------------------------------------------------------------------------
# Graph serialization: line-delimited JSON records. The writer lives here so
# the model owns its round-trip; frontend.load_graph_jsonl is the validating
# reader.
# ---------------------------------------------------------------------------

def node_to_record(node: DfgNode) -> dict:
    rec: dict = {
        "rec": "node",
        "id": node.id,
        "kind": node.kind.value,
        "file": node.file,
        "line": node.line,
        "column": node.column,
        "enclosing_function": node.enclosing_function,
        "code_text": node.code_text,
    }
    if node.position is not None:
        rec["position"] = node.position
    if node.call_id is not None:
        rec["call_id"] = node.call_id
    if node.function_id is not None:
        rec["function_id"] = node.function_id
    return rec


def node_from_record(rec: dict) -> DfgNode:
    return DfgNode(
        id=int(rec["id"]),
        kind=NodeKind(rec["kind"]),
        file=rec["file"],
        line=int(rec["line"]),
        column=int(rec.get("column", 1)),
        enclosing_function=rec.get("enclosing_function", ""),
        code_text=rec.get("code_text", ""),
        position=rec.get("position"),
        call_id=rec.get("call_id"),
        function_id=rec.get("function_id"),
    )


def api_to_obj(api: ApiSignature) -> dict:
    obj = {
        "package": api.package,
        "class": api.class_name,
        "method": api.method,
        "signature": list(api.signature),
        "is_external": api.is_external,
    }
    if api.position is not None:
        obj["position"] = api.position
    return obj


def api_from_obj(obj: dict) -> ApiSignature:
    return ApiSignature(
        package=obj["package"],
        class_name=obj["class"],
        method=obj["method"],
        signature=tuple(obj.get("signature", [])),
        position=obj.get("position"),
        is_external=bool(obj.get("is_external", True)),
    )


def graph_to_records(g: DataflowGraph) -> list[dict]:
    records: list[dict] = []
    for node_id in sorted(g.nodes):
        records.append(node_to_record(g.nodes[node_id]))
    for edge in g.edges:
        records.append({"rec": "edge", "src": edge.src, "dst": edge.dst, "kind": edge.kind.value})
    for call in g.calls:
        records.append(
            {
                "rec": "call",
                "call_id": call.call_id,
                "callee": api_to_obj(call.callee),
                "arg_nodes": {str(pos): nid for pos, nid in sorted(call.arg_nodes.items())},
                "result_node": call.result_node,
            }
        )
    for fn in g.functions:
        records.append(
            {
                "rec": "function",
                "name": fn.name,
                "visibility": fn.visibility.value,
                "param_nodes": list(fn.param_nodes),
                "param_names": list(fn.param_names),
                "defined_in_file": fn.defined_in_file,
            }
        )
    return records


def write_graph_jsonl(g: DataflowGraph, fp: IO[str]) -> None:
    for rec in graph_to_records(g):
        fp.write(json.dumps(rec, sort_keys=True, separators=(",", ":")))
        fp.write("\n")


def graph_to_jsonl(g: DataflowGraph) -> str:
    lines = [json.dumps(rec, sort_keys=True, separators=(",", ":")) for rec in graph_to_records(g)]
    return "\n".join(lines) + "\n" if lines else ""
