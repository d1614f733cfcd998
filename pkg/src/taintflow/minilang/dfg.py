"""Builds the interprocedural dataflow graph from a parsed MiniLang program.

Taint-step edges:
  * assignments flow the right-hand side into the definition node;
  * variable uses read every reaching definition (both branch definitions
    survive an ``if``: reaching defs are flow-insensitive across branches);
  * concatenation flows both operands into a Concat node;
  * internal calls flow arguments into parameters and the callee's returns
    into the call result;
  * external calls never flow arguments into their result (unknown calls
    block taint by default; propagator specs re-open them engine-side);
  * a throw lexically inside a try flows into the nearest enclosing catch
    parameter via an Exceptional edge;
  * an if-condition contributes a Control edge only.
"""
from __future__ import annotations

from typing import Optional

from ..core import (
    ApiSignature,
    CallRecord,
    DataflowGraph,
    DfgEdge,
    DfgNode,
    EdgeKind,
    FunctionRecord,
    NodeId,
    NodeKind,
    RECEIVER_POSITION,
    Visibility,
    function_api,
    validate_graph,
)
from .parser import (
    Concat,
    ExprStmt,
    ExternCall,
    FunctionDecl,
    IfStmt,
    InternalCall,
    LetStmt,
    MiniProgram,
    NameRef,
    Pos,
    ReturnStmt,
    StringLit,
    ThrowStmt,
    TryStmt,
)

Env = dict[str, tuple[NodeId, ...]]


class InternalInconsistencyError(Exception):
    """Raised when the builder produced a graph violating model invariants."""


def build_dfg(program: MiniProgram) -> DataflowGraph:
    builder = _Builder(program)
    graph = builder.build()
    violations = validate_graph(graph)
    if violations:
        raise InternalInconsistencyError("; ".join(violations))
    return graph


class _Builder:
    def __init__(self, program: MiniProgram) -> None:
        self.program = program
        self.nodes: dict[NodeId, DfgNode] = {}
        self.edges: list[DfgEdge] = []
        self.calls: list[CallRecord] = []
        self.functions: list[FunctionRecord] = []
        self.next_node: NodeId = 0
        self.next_call = 0
        self.fn_records: dict[str, FunctionRecord] = {}
        self.fn_returns: dict[str, list[NodeId]] = {}
        self.return_sites: list[tuple[str, NodeId]] = []  # (callee, result node)
        self.current: Optional[FunctionDecl] = None

    def build(self) -> DataflowGraph:
        for fn in self.program.functions:
            param_ids = []
            for index, _name in enumerate(fn.params):
                param_ids.append(
                    self.new_node(
                        NodeKind.PARAMETER,
                        fn.pos,
                        fn.name,
                        position=index,
                        function_id=fn.name,
                    )
                )
            record = FunctionRecord(
                name=fn.name,
                visibility=Visibility(fn.visibility),
                param_nodes=tuple(param_ids),
                defined_in_file=fn.file,
                param_names=fn.params,
            )
            self.fn_records[fn.name] = record
            self.fn_returns[fn.name] = []
            self.functions.append(record)

        for fn in self.program.functions:
            self.current = fn
            env: Env = {}
            for name, node_id in zip(fn.params, self.fn_records[fn.name].param_nodes):
                env[name] = (node_id,)
            self.walk_block(fn.body, env, [])
        self.current = None

        for callee, result_node in self.return_sites:
            for ret_node in self.fn_returns[callee]:
                self.add_edge(ret_node, result_node, EdgeKind.DATA)

        return DataflowGraph(self.nodes, self.edges, self.calls, self.functions)

    # -- graph construction helpers ----------------------------------------

    def new_node(
        self,
        kind: NodeKind,
        pos: Pos,
        function: str,
        position: Optional[int] = None,
        call_id: Optional[str] = None,
        function_id: Optional[str] = None,
    ) -> NodeId:
        node_id = self.next_node
        self.next_node += 1
        self.nodes[node_id] = DfgNode(
            id=node_id,
            kind=kind,
            file=pos.file,
            line=pos.line,
            column=pos.column,
            enclosing_function=function,
            code_text=self.program.line_text(pos.file, pos.line),
            position=position,
            call_id=call_id,
            function_id=function_id,
        )
        return node_id

    def add_edge(self, src: NodeId, dst: NodeId, kind: EdgeKind) -> None:
        self.edges.append(DfgEdge(src, dst, kind))

    # -- statements ----------------------------------------------------------

    def walk_block(self, stmts: tuple, env: Env, try_stack: list[NodeId]) -> Env:
        for stmt in stmts:
            env = self.walk_stmt(stmt, env, try_stack)
        return env

    def walk_stmt(self, stmt: object, env: Env, try_stack: list[NodeId]) -> Env:
        fn = self.current
        assert fn is not None
        if isinstance(stmt, LetStmt):
            value = self.eval_expr(stmt.expr, env, try_stack)
            def_node = self.new_node(NodeKind.LOCAL_DEF, stmt.pos, fn.name)
            if value is not None:
                self.add_edge(value, def_node, EdgeKind.DATA)
            env[stmt.name] = (def_node,)
            return env
        if isinstance(stmt, ReturnStmt):
            if stmt.expr is not None:
                value = self.eval_expr(stmt.expr, env, try_stack)
                ret_node = self.new_node(NodeKind.RETURN, stmt.pos, fn.name)
                if value is not None:
                    self.add_edge(value, ret_node, EdgeKind.DATA)
                self.fn_returns[fn.name].append(ret_node)
            return env
        if isinstance(stmt, ThrowStmt):
            value = self.eval_expr(stmt.expr, env, try_stack)
            throw_node = self.new_node(NodeKind.THROW_VALUE, stmt.pos, fn.name)
            if value is not None:
                self.add_edge(value, throw_node, EdgeKind.DATA)
            if try_stack:
                self.add_edge(throw_node, try_stack[-1], EdgeKind.EXCEPTIONAL)
            return env
        if isinstance(stmt, TryStmt):
            catch_node = self.new_node(NodeKind.CATCH_PARAM, stmt.catch_pos, fn.name)
            body_env = self.walk_block(stmt.body, dict(env), try_stack + [catch_node])
            # the handler may run after any prefix of the body, so it sees
            # both the pre-try and the body-exit definitions
            handler_env = _union(env, body_env)
            handler_env[stmt.catch_name] = (catch_node,)
            handler_env = self.walk_block(stmt.handler, handler_env, try_stack)
            return _union(body_env, handler_env)
        if isinstance(stmt, IfStmt):
            cond_node = self.eval_expr(stmt.cond, env, try_stack)
            watermark = self.next_node
            then_env = self.walk_block(stmt.then_body, dict(env), try_stack)
            if cond_node is not None and self.next_node > watermark:
                self.add_edge(cond_node, watermark, EdgeKind.CONTROL)
            if stmt.else_body is not None:
                watermark = self.next_node
                else_env = self.walk_block(stmt.else_body, dict(env), try_stack)
                if cond_node is not None and self.next_node > watermark:
                    self.add_edge(cond_node, watermark, EdgeKind.CONTROL)
            else:
                else_env = env
            return _union(then_env, else_env)
        if isinstance(stmt, ExprStmt):
            self.eval_expr(stmt.expr, env, try_stack)
            return env
        raise AssertionError(f"unknown statement {stmt!r}")

    # -- expressions ---------------------------------------------------------

    def eval_expr(self, expr: object, env: Env, try_stack: list[NodeId]) -> Optional[NodeId]:
        fn = self.current
        assert fn is not None
        if isinstance(expr, StringLit):
            return self.new_node(NodeKind.LITERAL, expr.pos, fn.name)
        if isinstance(expr, NameRef):
            use_node = self.new_node(NodeKind.VAR_USE, expr.pos, fn.name)
            for def_node in env.get(expr.name, ()):
                self.add_edge(def_node, use_node, EdgeKind.DATA)
            return use_node
        if isinstance(expr, Concat):
            left = self.eval_expr(expr.left, env, try_stack)
            right = self.eval_expr(expr.right, env, try_stack)
            concat_node = self.new_node(NodeKind.CONCAT, expr.pos, fn.name)
            if left is not None:
                self.add_edge(left, concat_node, EdgeKind.DATA)
            if right is not None:
                self.add_edge(right, concat_node, EdgeKind.DATA)
            return concat_node
        if isinstance(expr, ExternCall):
            return self.eval_extern_call(expr, env, try_stack)
        if isinstance(expr, InternalCall):
            return self.eval_internal_call(expr, env, try_stack)
        raise AssertionError(f"unknown expression {expr!r}")

    def _argument_node(
        self, value: Optional[NodeId], position: int, call_id: str, pos: Pos, fn_name: str
    ) -> NodeId:
        arg_node = self.new_node(NodeKind.ARGUMENT, pos, fn_name, position=position, call_id=call_id)
        if value is not None:
            self.add_edge(value, arg_node, EdgeKind.DATA)
        return arg_node

    def eval_extern_call(self, expr: ExternCall, env: Env, try_stack: list[NodeId]) -> Optional[NodeId]:
        fn = self.current
        assert fn is not None
        call_id = self._next_call_id()
        arg_map: dict[int, NodeId] = {}
        if expr.receiver is not None:
            recv_value = self.eval_expr(expr.receiver, env, try_stack)
            recv_pos = getattr(expr.receiver, "pos", expr.pos)
            arg_map[RECEIVER_POSITION] = self._argument_node(
                recv_value, RECEIVER_POSITION, call_id, recv_pos, fn.name
            )
        for index, arg in enumerate(expr.args):
            value = self.eval_expr(arg, env, try_stack)
            arg_pos = getattr(arg, "pos", expr.pos)
            arg_map[index] = self._argument_node(value, index, call_id, arg_pos, fn.name)
        result = None
        if expr.extern.ret != "void":
            result = self.new_node(NodeKind.CALL_RESULT, expr.pos, fn.name, call_id=call_id)
        callee = ApiSignature(
            package=expr.extern.package,
            class_name=expr.extern.class_name,
            method=expr.extern.method,
            signature=tuple(expr.extern.params),
            is_external=True,
        )
        # No data edge from any argument to the result: unknown calls block flow.
        self.calls.append(CallRecord(call_id, callee, arg_map, result))
        return result

    def eval_internal_call(self, expr: InternalCall, env: Env, try_stack: list[NodeId]) -> NodeId:
        fn = self.current
        assert fn is not None
        callee_record = self.fn_records[expr.callee]
        call_id = self._next_call_id()
        arg_map: dict[int, NodeId] = {}
        for index, arg in enumerate(expr.args):
            value = self.eval_expr(arg, env, try_stack)
            arg_pos = getattr(arg, "pos", expr.pos)
            arg_node = self._argument_node(value, index, call_id, arg_pos, fn.name)
            arg_map[index] = arg_node
            if index < len(callee_record.param_nodes):
                self.add_edge(arg_node, callee_record.param_nodes[index], EdgeKind.DATA)
        result = self.new_node(NodeKind.CALL_RESULT, expr.pos, fn.name, call_id=call_id)
        self.calls.append(CallRecord(call_id, function_api(callee_record), arg_map, result))
        self.return_sites.append((expr.callee, result))
        return result

    def _next_call_id(self) -> str:
        call_id = f"c{self.next_call}"
        self.next_call += 1
        return call_id


def _union(a: Env, b: Env) -> Env:
    merged: Env = dict(a)
    for name, defs in b.items():
        if name in merged:
            merged[name] = tuple(dict.fromkeys(merged[name] + defs))
        else:
            merged[name] = defs
    return merged
