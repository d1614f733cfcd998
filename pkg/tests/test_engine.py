import random

from taintflow.core import (
    ApiSignature,
    Cwe,
    DataflowGraph,
    DfgEdge,
    EdgeKind,
    NodeKind,
    Role,
    SpecNodeType,
    TaintSpec,
)
from taintflow.engine import (
    PathLimits,
    resolve_specs,
    synthetic_endpoints,
    unsanitized_paths,
)
from taintflow.minilang import SourceFile, build_dfg, parse

from conftest import node


# --- independent oracle: exhaustive simple-path enumeration -----------------

def all_simple_paths(edges, source, sink, blocked):
    """Every simple path source->sink whose nodes past the source avoid
    ``blocked``; plain recursive DFS, no engine code involved."""
    succ = {}
    for s, d in edges:
        succ.setdefault(s, []).append(d)
    out = []

    def walk(path):
        cur = path[-1]
        if cur == sink and len(path) >= 2:
            out.append(tuple(path))
            return
        for nxt in succ.get(cur, []):
            if nxt in path or nxt in blocked:
                continue
            walk(path + [nxt])

    walk([source])
    return out


def oracle_pairs(edges, sources, sinks, sanitizers):
    pairs = set()
    for s in sources:
        for t in sinks:
            if s == t:
                if (s, s) in edges and s not in sanitizers:
                    pairs.add((s, t))
                continue
            if all_simple_paths(edges, s, t, sanitizers):
                pairs.add((s, t))
    return pairs


def graph_from_edges(n, edges):
    nodes = {i: node(i, NodeKind.LOCAL_DEF, line=i + 1) for i in range(n)}
    return DataflowGraph(nodes, [DfgEdge(s, d, EdgeKind.DATA) for s, d in edges])


def test_single_edge_source_to_sink():
    g = graph_from_edges(2, [(0, 1)])
    result = unsanitized_paths(g, synthetic_endpoints([0], [1]))
    assert [p.nodes for p in result.paths] == [(0, 1)]
    assert result.truncated is False


def test_sanitizer_on_only_route_blocks():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    result = unsanitized_paths(g, synthetic_endpoints([0], [2], sanitizers=[1]))
    assert result.paths == []


def test_sanitizer_sink_is_unreachable():
    g = graph_from_edges(2, [(0, 1)])
    result = unsanitized_paths(g, synthetic_endpoints([0], [1], sanitizers=[1]))
    assert result.paths == []


def test_sanitizer_source_may_originate():
    g = graph_from_edges(3, [(0, 1), (1, 2)])
    result = unsanitized_paths(g, synthetic_endpoints([0], [2], sanitizers=[0]))
    assert [p.nodes for p in result.paths] == [(0, 1, 2)]


def test_source_equals_sink_needs_self_edge():
    nodes = {0: node(0), 1: node(1)}
    g = DataflowGraph(nodes, [DfgEdge(0, 0, EdgeKind.EXCEPTIONAL), DfgEdge(0, 1, EdgeKind.DATA)])
    both = synthetic_endpoints([0], [0])
    result = unsanitized_paths(g, both)
    assert [p.nodes for p in result.paths] == [(0, 0)]
    # without any self edge the pair is excluded
    g2 = graph_from_edges(3, [(0, 1), (1, 2)])
    assert unsanitized_paths(g2, synthetic_endpoints([0], [0])).paths == []


def test_shortest_path_per_pair_and_ordering():
    # two routes 0->3: direct and via 1,2; BFS returns the shortest
    g = graph_from_edges(4, [(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)])
    result = unsanitized_paths(g, synthetic_endpoints([0], [2, 3]))
    assert [p.nodes for p in result.paths] == [(0, 2), (0, 3)]


def test_max_paths_per_pair_enumerates_alternatives():
    g = graph_from_edges(4, [(0, 1), (1, 3), (0, 2), (2, 3), (0, 3)])
    limits = PathLimits(max_paths_per_pair=3, max_total_paths=100, max_length=10)
    result = unsanitized_paths(g, synthetic_endpoints([0], [3]), limits)
    assert [p.nodes for p in result.paths] == [(0, 3), (0, 1, 3), (0, 2, 3)]


def test_total_path_truncation_is_flagged():
    g = graph_from_edges(5, [(0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4)])
    limits = PathLimits(max_paths_per_pair=1, max_total_paths=4, max_length=10)
    result = unsanitized_paths(g, synthetic_endpoints([0, 1], [2, 3, 4]), limits)
    assert result.truncated is True
    assert len(result.paths) == 4


def test_max_length_bounds_search():
    g = graph_from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    limits = PathLimits(max_paths_per_pair=1, max_total_paths=10, max_length=3)
    assert unsanitized_paths(g, synthetic_endpoints([0], [4]), limits).paths == []
    assert unsanitized_paths(g, synthetic_endpoints([0], [2]), limits).paths != []


def test_random_dags_match_brute_force_oracle():
    rng = random.Random(20250810)
    for _ in range(60):
        n = rng.randint(2, 12)
        edges = sorted(
            {
                (s, d)
                for s in range(n)
                for d in range(s + 1, n)
                if rng.random() < 0.3
            }
        )
        nodes = list(range(n))
        rng.shuffle(nodes)
        sources = set(nodes[: rng.randint(1, 3)])
        sinks = set(rng.sample(range(n), rng.randint(1, 2)))
        sanitizers = set(rng.sample(range(n), rng.randint(0, 2)))
        g = graph_from_edges(n, edges)
        ep = synthetic_endpoints(sources, sinks, sanitizers)
        result = unsanitized_paths(
            g, ep, PathLimits(max_paths_per_pair=1, max_total_paths=10_000, max_length=100)
        )
        got = {(p.nodes[0], p.nodes[-1]) for p in result.paths}
        expected = oracle_pairs(set(edges), sources, sinks, sanitizers)
        assert got == expected
        for p in result.paths:  # soundness: no sanitizer past the source
            assert all(n_ not in sanitizers for n_ in p.nodes[1:])


def test_adding_sanitizers_never_adds_pairs():
    rng = random.Random(7)
    for _ in range(25):
        n = rng.randint(3, 10)
        edges = sorted(
            {(s, d) for s in range(n) for d in range(s + 1, n) if rng.random() < 0.35}
        )
        g = graph_from_edges(n, edges)
        sources = set(rng.sample(range(n), 2))
        sinks = set(rng.sample(range(n), 2))
        extra = rng.randrange(n)
        base = unsanitized_paths(g, synthetic_endpoints(sources, sinks))
        more = unsanitized_paths(g, synthetic_endpoints(sources, sinks, sanitizers={extra}))
        base_pairs = {(p.nodes[0], p.nodes[-1]) for p in base.paths}
        more_pairs = {(p.nodes[0], p.nodes[-1]) for p in more.paths}
        assert more_pairs <= base_pairs


def minilang_fixture():
    src = (
        "extern http.web.Request.getParam(String): String;\n"
        "extern java.lang.Runtime.exec(String): String;\n"
        "extern esc.html.Escaper.escapeHtml(String): String;\n"
        "public fn f(req) {\n"
        '  let v = req.getParam("cmd");\n'
        "  let clean = esc.html.Escaper.escapeHtml(v);\n"
        "  let r = java.lang.Runtime.exec(v);\n"
        "  return r;\n"
        "}\n"
    )
    return build_dfg(parse([SourceFile("src/main/a.ml", src)]))


def spec(node_type, package, class_name, method, sig, role, position=None):
    return TaintSpec(
        node_type=node_type,
        api=ApiSignature(package, class_name, method, tuple(sig), position=position),
        role=role,
        cwe=Cwe.CWE78,
    )


def test_resolve_specs_brute_force_scan():
    g = minilang_fixture()
    source = spec(SpecNodeType.RETURN_VALUE, "http.web", "Request", "getParam", ["String"], Role.SOURCE)
    sink = spec(SpecNodeType.ARGUMENT, "java.lang", "Runtime", "exec", ["String"], Role.SINK, position=0)
    sanitizer = spec(
        SpecNodeType.RETURN_VALUE, "esc.html", "Escaper", "escapeHtml", ["String"], Role.SANITIZER
    )
    ep = resolve_specs(g, [source, sink, sanitizer])
    # oracle: scan every node by hand using the call records
    exec_call = next(c for c in g.calls if c.callee.method == "exec")
    getparam_call = next(c for c in g.calls if c.callee.method == "getParam")
    escape_call = next(c for c in g.calls if c.callee.method == "escapeHtml")
    assert set(ep.sources) == {getparam_call.result_node}
    assert set(ep.sinks) == {exec_call.arg_nodes[0]}
    assert ep.sanitizers == {escape_call.result_node}
    assert ep.propagator_edges == []


def test_resolve_specs_empty_for_unmatched():
    g = minilang_fixture()
    ep = resolve_specs(g, [spec(SpecNodeType.RETURN_VALUE, "no.such", "Api", "x", [], Role.SOURCE)])
    assert not ep.sources and not ep.sinks and not ep.sanitizers


def test_propagator_edges_open_external_calls():
    g = minilang_fixture()
    prop = spec(
        SpecNodeType.RETURN_VALUE, "esc.html", "Escaper", "escapeHtml", ["String"], Role.TAINT_PROPAGATOR
    )
    ep = resolve_specs(g, [prop])
    escape_call = next(c for c in g.calls if c.callee.method == "escapeHtml")
    assert ep.propagator_edges == [
        (escape_call.arg_nodes[0], escape_call.result_node)
    ]


def test_removing_propagators_only_removes_paths():
    g = minilang_fixture()
    source = spec(SpecNodeType.RETURN_VALUE, "http.web", "Request", "getParam", ["String"], Role.SOURCE)
    sink = spec(SpecNodeType.ARGUMENT, "esc.html", "Escaper", "escapeHtml", ["String"], Role.SINK, position=0)
    prop = spec(
        SpecNodeType.RETURN_VALUE, "esc.html", "Escaper", "escapeHtml", ["String"], Role.TAINT_PROPAGATOR
    )
    with_prop = unsanitized_paths(g, resolve_specs(g, [source, sink, prop]))
    without = unsanitized_paths(g, resolve_specs(g, [source, sink]))
    pairs_with = {(p.nodes[0], p.nodes[-1]) for p in with_prop.paths}
    pairs_without = {(p.nodes[0], p.nodes[-1]) for p in without.paths}
    assert pairs_without <= pairs_with


def test_exceptional_edges_are_taint_steps_and_can_be_disabled():
    src = (
        "extern t.x.Sink.put(String): void;\n"
        "public fn f(v) {\n"
        "  try { throw v; } catch (e) { s.put(e); }\n"
        "  return v;\n"
        "}\n"
    )
    g = build_dfg(parse([SourceFile("src/main/a.ml", src)]))
    param = g.functions[0].param_nodes[0]
    sink_arg = next(
        n.id for n in g.nodes.values() if n.kind is NodeKind.ARGUMENT and n.position == 0
    )
    ep = synthetic_endpoints([param], [sink_arg])
    assert len(unsanitized_paths(g, ep).paths) == 1
    assert unsanitized_paths(g, ep, include_exceptional=False).paths == []


def test_results_are_deterministic():
    g = graph_from_edges(6, [(0, 1), (1, 2), (0, 3), (3, 4), (4, 2), (1, 5)])
    ep = synthetic_endpoints([0], [2, 5])
    a = unsanitized_paths(g, ep)
    b = unsanitized_paths(g, ep)
    assert [p.nodes for p in a.paths] == [p.nodes for p in b.paths]
