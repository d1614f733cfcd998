import io

import pytest
from hypothesis import given, strategies as st

from taintflow.core import DataflowGraph, DfgEdge, EdgeKind, NodeKind, graph_to_jsonl
from taintflow.engine import synthetic_endpoints, unsanitized_paths
from taintflow.graphio import GraphFormatError, GraphValidationError, load_graph_jsonl
from taintflow.minilang import SourceFile, build_dfg, parse

from conftest import node


def test_round_trip_of_built_graph():
    prog = parse(
        [
            SourceFile(
                "src/main/a.ml",
                "extern e.x.T.sink(String): void;\n"
                "public fn f(v) { try { throw v; } catch (e) { t.sink(e); } return v; }",
            )
        ]
    )
    g = build_dfg(prog)
    loaded = load_graph_jsonl(io.StringIO(graph_to_jsonl(g)))
    assert loaded == g
    # and serializing the loaded graph is byte-identical
    assert graph_to_jsonl(loaded) == graph_to_jsonl(g)


def test_dangling_edge_is_a_validation_error():
    lines = (
        '{"rec":"node","id":0,"kind":"LocalDef","file":"f.ml","line":1,"column":1,'
        '"enclosing_function":"f","code_text":"x"}\n'
        '{"rec":"edge","src":0,"dst":9,"kind":"Data"}\n'
    )
    with pytest.raises(GraphValidationError, match="dangling edge"):
        load_graph_jsonl(io.StringIO(lines))


def test_duplicate_node_id_is_a_validation_error():
    rec = (
        '{"rec":"node","id":0,"kind":"LocalDef","file":"f.ml","line":1,"column":1,'
        '"enclosing_function":"f","code_text":"x"}\n'
    )
    with pytest.raises(GraphValidationError, match="duplicate node id"):
        load_graph_jsonl(io.StringIO(rec + rec))


def test_bad_json_reports_line_number():
    with pytest.raises(GraphFormatError, match="line 2"):
        load_graph_jsonl(io.StringIO('{"rec":"edge","src":0,"dst":1,"kind":"Data"}\nnot json\n'))


def test_unknown_record_kind_rejected():
    with pytest.raises(GraphFormatError, match="unknown record kind"):
        load_graph_jsonl(io.StringIO('{"rec":"mystery"}\n'))


def test_three_node_handwritten_graph_yields_one_path():
    # source call result -> def -> sink argument; the engine must find
    # exactly the one path the brute-force reading of the file promises
    lines = "\n".join(
        [
            '{"rec":"node","id":0,"kind":"CallResult","file":"m.ml","line":1,"column":1,'
            '"enclosing_function":"f","code_text":"get()","call_id":"c0"}',
            '{"rec":"node","id":1,"kind":"LocalDef","file":"m.ml","line":1,"column":1,'
            '"enclosing_function":"f","code_text":"let x"}',
            '{"rec":"node","id":2,"kind":"Argument","file":"m.ml","line":2,"column":1,'
            '"enclosing_function":"f","code_text":"sink(x)","position":0,"call_id":"c1"}',
            '{"rec":"edge","src":0,"dst":1,"kind":"Data"}',
            '{"rec":"edge","src":1,"dst":2,"kind":"Data"}',
            '{"rec":"call","call_id":"c0","callee":{"package":"p","class":"S","method":"get",'
            '"signature":[],"is_external":true},"arg_nodes":{},"result_node":0}',
            '{"rec":"call","call_id":"c1","callee":{"package":"p","class":"T","method":"put",'
            '"signature":["String"],"is_external":true},"arg_nodes":{"0":2},"result_node":null}',
        ]
    )
    g = load_graph_jsonl(io.StringIO(lines + "\n"))
    result = unsanitized_paths(g, synthetic_endpoints(sources=[0], sinks=[2]))
    assert len(result.paths) == 1
    assert result.paths[0].nodes == (0, 1, 2)


@st.composite
def small_graphs(draw):
    n = draw(st.integers(min_value=0, max_value=8))
    nodes = {i: node(i, NodeKind.LOCAL_DEF, line=i + 1) for i in range(n)}
    edges = []
    if n >= 2:
        pairs = draw(
            st.lists(
                st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                max_size=12,
            )
        )
        kinds = draw(st.lists(st.sampled_from(list(EdgeKind)), min_size=len(pairs), max_size=len(pairs)))
        for (s, d), k in zip(pairs, kinds):
            if s == d and k is EdgeKind.DATA:
                continue
            edges.append(DfgEdge(s, d, k))
    return DataflowGraph(nodes, edges)


@given(small_graphs())
def test_round_trip_property(g):
    text = graph_to_jsonl(g)
    if not text:
        assert g.nodes == {} and g.edges == ()
        return
    loaded = load_graph_jsonl(io.StringIO(text))
    assert loaded == g
