"""Path engine: resolves specs to node sets and enumerates unsanitized
source-to-sink paths over the dataflow graph."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional

from .core import (
    ApiSignature,
    Cwe,
    DataflowGraph,
    EdgeKind,
    NodeId,
    Role,
    SpecNodeType,
    TaintPath,
    TaintSpec,
    match_spec,
    sort_specs,
)


@dataclass(frozen=True)
class PathLimits:
    max_paths_per_pair: int = 1
    max_total_paths: int = 1000
    max_length: int = 80

    def __post_init__(self) -> None:
        if min(self.max_paths_per_pair, self.max_total_paths, self.max_length) <= 0:
            raise ValueError("all path limits must be positive")


@dataclass
class ResolvedEndpoints:
    """Node sets a spec set denotes on a concrete graph.

    sources/sinks map each matched node to the (canonically first) spec that
    matched it; propagator_edges are the extra argument-to-result data edges
    opened up by TaintPropagator specs.
    """

    sources: dict[NodeId, TaintSpec] = field(default_factory=dict)
    sinks: dict[NodeId, TaintSpec] = field(default_factory=dict)
    sanitizers: set[NodeId] = field(default_factory=set)
    propagator_edges: list[tuple[NodeId, NodeId]] = field(default_factory=list)


@dataclass
class PathSearchResult:
    paths: list[TaintPath]
    truncated: bool = False


def resolve_specs(g: DataflowGraph, specs: Iterable[TaintSpec]) -> ResolvedEndpoints:
    """Map specs to concrete node sets; pure and deterministic."""
    ep = ResolvedEndpoints()
    for spec in sort_specs(specs):
        if spec.role is Role.TAINT_PROPAGATOR:
            for call in g.calls:
                if call.result_node is None or call.callee.key() != spec.api.key():
                    continue
                for arg_node in call.arg_nodes.values():
                    ep.propagator_edges.append((arg_node, call.result_node))
            continue
        for node_id in sorted(g.nodes):
            if not match_spec(spec, g.nodes[node_id], g):
                continue
            if spec.role is Role.SOURCE:
                ep.sources.setdefault(node_id, spec)
            elif spec.role is Role.SINK:
                ep.sinks.setdefault(node_id, spec)
            elif spec.role is Role.SANITIZER:
                ep.sanitizers.add(node_id)
    ep.propagator_edges = sorted(set(ep.propagator_edges))
    return ep


def synthetic_endpoints(
    sources: Iterable[NodeId],
    sinks: Iterable[NodeId],
    sanitizers: Iterable[NodeId] = (),
    cwe: Cwe = Cwe.CWE22,
) -> ResolvedEndpoints:
    """Endpoint sets with placeholder specs, for graphs built without specs."""
    src_spec = TaintSpec(SpecNodeType.RETURN_VALUE, ApiSignature("x", "Source", "get"), Role.SOURCE, cwe)
    sink_spec = TaintSpec(
        SpecNodeType.ARGUMENT, ApiSignature("x", "Sink", "put", position=0), Role.SINK, cwe
    )
    return ResolvedEndpoints(
        sources={n: src_spec for n in sources},
        sinks={n: sink_spec for n in sinks},
        sanitizers=set(sanitizers),
    )


def taint_adjacency(
    g: DataflowGraph,
    propagator_edges: Iterable[tuple[NodeId, NodeId]] = (),
    include_exceptional: bool = True,
) -> dict[NodeId, list[NodeId]]:
    """Taint-step successor map: data edges, propagator edges, and (unless
    disabled) exceptional throw-to-catch edges. Control edges are not steps."""
    adj: dict[NodeId, set[NodeId]] = {}
    for edge in g.edges:
        if edge.kind is EdgeKind.DATA or (include_exceptional and edge.kind is EdgeKind.EXCEPTIONAL):
            adj.setdefault(edge.src, set()).add(edge.dst)
    for src, dst in propagator_edges:
        adj.setdefault(src, set()).add(dst)
    return {node: sorted(succ) for node, succ in adj.items()}


def unsanitized_paths(
    g: DataflowGraph,
    ep: ResolvedEndpoints,
    limits: Optional[PathLimits] = None,
    include_exceptional: bool = True,
) -> PathSearchResult:
    """All (source, sink) pairs connected by a path avoiding sanitizer nodes.

    Shortest path per pair first (BFS with ascending-id tie-break); ordering
    is deterministic by (source id, sink id, length). Hitting
    max_total_paths flags truncation instead of failing.
    """
    limits = limits or PathLimits()
    adj = taint_adjacency(g, ep.propagator_edges, include_exceptional)
    paths: list[TaintPath] = []
    for source in sorted(ep.sources):
        parent = _bfs(adj, source, ep.sanitizers, limits.max_length)
        for sink in sorted(ep.sinks):
            pair_paths: list[tuple[NodeId, ...]] = []
            if sink == source:
                # a node that is both endpoints counts only via a self-edge
                if sink in adj.get(source, ()) and sink not in ep.sanitizers:
                    pair_paths = [(source, sink)]
            elif sink in parent:
                if limits.max_paths_per_pair == 1:
                    pair_paths = [_reconstruct(parent, source, sink)]
                else:
                    pair_paths = _simple_paths(
                        adj, source, sink, ep.sanitizers, limits.max_length
                    )[: limits.max_paths_per_pair]
            for nodes in pair_paths:
                paths.append(
                    TaintPath(
                        nodes=nodes,
                        source_spec=ep.sources[source],
                        sink_spec=ep.sinks[sink],
                        cwe=ep.sources[source].cwe,
                    )
                )
    paths.sort(key=lambda p: (p.nodes[0], p.nodes[-1], len(p.nodes), p.nodes))
    truncated = len(paths) > limits.max_total_paths
    if truncated:
        paths = paths[: limits.max_total_paths]
    return PathSearchResult(paths=paths, truncated=truncated)


def _bfs(
    adj: dict[NodeId, list[NodeId]],
    source: NodeId,
    sanitizers: set[NodeId],
    max_length: int,
) -> dict[NodeId, Optional[NodeId]]:
    """Shortest-path parents from source, never entering sanitizer nodes.

    The source itself is exempt from the sanitizer check: a sanitizer may
    still originate taint, it only blocks paths passing through it.
    """
    parent: dict[NodeId, Optional[NodeId]] = {source: None}
    depth = {source: 0}
    queue = [source]
    while queue:
        next_queue: list[NodeId] = []
        for node in queue:
            if depth[node] + 1 > max_length - 1:
                continue
            for succ in adj.get(node, ()):
                if succ == source or succ in parent or succ in sanitizers:
                    continue
                parent[succ] = node
                depth[succ] = depth[node] + 1
                next_queue.append(succ)
        queue = next_queue
    return parent


def _reconstruct(parent: dict[NodeId, Optional[NodeId]], source: NodeId, sink: NodeId) -> tuple[NodeId, ...]:
    nodes = [sink]
    while nodes[-1] != source:
        prev = parent[nodes[-1]]
        assert prev is not None
        nodes.append(prev)
    return tuple(reversed(nodes))


def _simple_paths(
    adj: dict[NodeId, list[NodeId]],
    source: NodeId,
    sink: NodeId,
    sanitizers: set[NodeId],
    max_length: int,
) -> list[tuple[NodeId, ...]]:
    """All simple source-to-sink paths avoiding sanitizers past the source,
    sorted by (length, node sequence)."""
    found: list[tuple[NodeId, ...]] = []
    stack = [source]
    on_stack = {source}

    def walk(node: NodeId) -> None:
        if len(stack) > max_length:
            return
        if node == sink and len(stack) >= 2:
            found.append(tuple(stack))
            return
        for succ in adj.get(node, ()):
            if succ in on_stack or succ in sanitizers:
                continue
            stack.append(succ)
            on_stack.add(succ)
            walk(succ)
            stack.pop()
            on_stack.discard(succ)

    walk(source)
    found.sort(key=lambda p: (len(p), p))
    return found
