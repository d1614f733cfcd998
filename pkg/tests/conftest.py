from __future__ import annotations

from pathlib import Path

import pytest

from taintflow.core import (
    ApiSignature,
    CallRecord,
    DataflowGraph,
    DfgEdge,
    DfgNode,
    EdgeKind,
    NodeKind,
)

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES = REPO_ROOT / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def node(
    node_id: int,
    kind: NodeKind = NodeKind.LOCAL_DEF,
    position=None,
    call_id=None,
    function_id=None,
    file: str = "src/main/app.ml",
    line: int = 1,
    function: str = "main",
    code: str = "x",
) -> DfgNode:
    return DfgNode(
        id=node_id,
        kind=kind,
        file=file,
        line=line,
        column=1,
        enclosing_function=function,
        code_text=code,
        position=position,
        call_id=call_id,
        function_id=function_id,
    )


def chain_graph(n: int, extra_edges=(), kinds=None) -> DataflowGraph:
    """n LocalDef nodes 0..n-1 linked 0->1->...->n-1 plus extra data edges."""
    nodes = {}
    for i in range(n):
        kind = kinds.get(i, NodeKind.LOCAL_DEF) if kinds else NodeKind.LOCAL_DEF
        nodes[i] = node(i, kind)
    edges = [DfgEdge(i, i + 1, EdgeKind.DATA) for i in range(n - 1)]
    edges += [DfgEdge(s, d, EdgeKind.DATA) for s, d in extra_edges]
    return DataflowGraph(nodes, edges)


def api(package="java.lang", class_name="Runtime", method="exec", signature=("String[]",), position=None):
    return ApiSignature(
        package=package,
        class_name=class_name,
        method=method,
        signature=tuple(signature),
        position=position,
    )


def call(call_id: str, callee: ApiSignature, arg_nodes: dict, result=None) -> CallRecord:
    return CallRecord(call_id=call_id, callee=callee, arg_nodes=arg_nodes, result_node=result)
