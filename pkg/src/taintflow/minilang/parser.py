"""Recursive-descent parser and call resolver for MiniLang.

MiniLang is a small imperative fixture language: functions, external API
declarations, calls, string concatenation, conditionals, and
try/throw/catch. Grammar:

    program := decl*
    decl    := "extern" QName "(" TypeList? ")" ":" Type ";"
             | ("public" | "private")? "fn" Name "(" Params? ")" Block
    stmt    := "let" Name "=" expr ";"
             | Name "=" expr ";"
             | "return" expr? ";"
             | "throw" expr ";"
             | "try" Block "catch" "(" Name ")" Block
             | "if" "(" expr ")" Block ("else" Block)?
             | expr ";"
    expr    := StringLit | Name | expr "+" expr
             | QName "(" Args? ")" | Name "(" Args? ")"
             | expr "." Name "(" Args? ")"

"+" is string concatenation; the only value type is the string. A dotted
call is external iff its full QName matches an extern declaration; a
receiver call ``e.m(...)`` targets the unique extern whose last QName
segment is ``m`` and whose signature arity matches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .lexer import KEYWORDS, LexError, Token, TokenType, tokenize

VALID_TYPES = ("String", "void")


@dataclass(frozen=True)
class SourceFile:
    path: str  # forward-slash relative path
    text: str


def is_test_file(path: str) -> bool:
    """Test files are exactly those whose path contains the segment pair src/test."""
    return "/src/test/" in f"/{path}/"


@dataclass(frozen=True)
class Pos:
    file: str
    line: int
    column: int


class ParseError(Exception):
    def __init__(self, message: str, pos: Pos) -> None:
        super().__init__(f"{pos.file}:{pos.line}:{pos.column}: {message}")
        self.pos = pos


class DuplicateDefinitionError(ParseError):
    pass


class UnresolvedCallError(ParseError):
    pass


# --- AST ------------------------------------------------------------------

@dataclass(frozen=True)
class StringLit:
    value: str
    pos: Pos


@dataclass(frozen=True)
class NameRef:
    name: str
    pos: Pos


@dataclass(frozen=True)
class Concat:
    left: "Expr"
    right: "Expr"
    pos: Pos


@dataclass(frozen=True)
class ExternDecl:
    qname: tuple[str, ...]
    params: tuple[str, ...]
    ret: str
    pos: Pos

    @property
    def name(self) -> str:
        return ".".join(self.qname)

    @property
    def package(self) -> str:
        return ".".join(self.qname[:-2])

    @property
    def class_name(self) -> str:
        return self.qname[-2]

    @property
    def method(self) -> str:
        return self.qname[-1]


@dataclass(frozen=True)
class ExternCall:
    extern: ExternDecl
    args: tuple["Expr", ...]
    receiver: Optional["Expr"]
    pos: Pos


@dataclass(frozen=True)
class InternalCall:
    callee: str
    args: tuple["Expr", ...]
    pos: Pos


@dataclass(frozen=True)
class LetStmt:
    name: str
    expr: object
    pos: Pos
    is_decl: bool = True


@dataclass(frozen=True)
class ReturnStmt:
    expr: Optional[object]
    pos: Pos


@dataclass(frozen=True)
class ThrowStmt:
    expr: object
    pos: Pos


@dataclass(frozen=True)
class TryStmt:
    body: tuple[object, ...]
    catch_name: str
    catch_pos: Pos
    handler: tuple[object, ...]
    pos: Pos


@dataclass(frozen=True)
class IfStmt:
    cond: object
    then_body: tuple[object, ...]
    else_body: Optional[tuple[object, ...]]
    pos: Pos


@dataclass(frozen=True)
class ExprStmt:
    expr: object
    pos: Pos


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    visibility: str  # "Public" | "Private"
    params: tuple[str, ...]
    body: tuple[object, ...]
    file: str
    pos: Pos


@dataclass
class MiniProgram:
    """A resolved MiniLang project: externs, functions, and source lines."""

    externs: list[ExternDecl] = field(default_factory=list)
    functions: list[FunctionDecl] = field(default_factory=list)
    sources: dict[str, tuple[str, ...]] = field(default_factory=dict)

    def function(self, name: str) -> Optional[FunctionDecl]:
        for fn in self.functions:
            if fn.name == name:
                return fn
        return None

    def line_text(self, file: str, line: int) -> str:
        lines = self.sources.get(file, ())
        if 1 <= line <= len(lines):
            return lines[line - 1].strip()
        return ""


# --- raw (unresolved) call forms used during the file-local parse ---------

@dataclass(frozen=True)
class _DottedCall:
    segments: tuple[str, ...]
    args: tuple[object, ...]
    pos: Pos


@dataclass(frozen=True)
class _NameCall:
    name: str
    args: tuple[object, ...]
    pos: Pos


@dataclass(frozen=True)
class _MethodCall:
    receiver: object
    method: str
    args: tuple[object, ...]
    pos: Pos


class _Parser:
    def __init__(self, tokens: list[Token], file: str) -> None:
        self.tokens = tokens
        self.file = file
        self.i = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.type is not TokenType.EOF:
            self.i += 1
        return tok

    def pos_of(self, tok: Token) -> Pos:
        return Pos(self.file, tok.line, tok.column)

    def error(self, message: str, tok: Optional[Token] = None) -> ParseError:
        tok = tok or self.peek()
        return ParseError(message, self.pos_of(tok))

    def expect(self, ttype: TokenType, what: str) -> Token:
        tok = self.peek()
        if tok.type is not ttype:
            raise self.error(f"expected {what}, found {tok.value!r}", tok)
        return self.advance()

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.type is not TokenType.IDENT or tok.value in KEYWORDS:
            raise self.error(f"expected {what}, found {tok.value!r}", tok)
        return self.advance()

    # declarations ---------------------------------------------------------

    def parse_program(self) -> tuple[list[ExternDecl], list[FunctionDecl]]:
        externs: list[ExternDecl] = []
        functions: list[FunctionDecl] = []
        while self.peek().type is not TokenType.EOF:
            tok = self.peek()
            if tok.is_keyword("extern"):
                externs.append(self.parse_extern())
            elif tok.is_keyword("public") or tok.is_keyword("private") or tok.is_keyword("fn"):
                functions.append(self.parse_function())
            else:
                raise self.error(f"expected declaration, found {tok.value!r}", tok)
        return externs, functions

    def parse_extern(self) -> ExternDecl:
        start = self.advance()  # extern
        first = self.expect_ident("qualified name")
        segments = [first.value]
        while self.peek().type is TokenType.DOT:
            self.advance()
            segments.append(self.expect_ident("qualified name segment").value)
        if len(segments) < 3:
            raise self.error(
                "extern name needs at least package, class, and method segments",
                first,
            )
        self.expect(TokenType.LPAREN, "'('")
        params: list[str] = []
        if self.peek().type is not TokenType.RPAREN:
            params.append(self.parse_type(allow_void=False))
            while self.peek().type is TokenType.COMMA:
                self.advance()
                params.append(self.parse_type(allow_void=False))
        self.expect(TokenType.RPAREN, "')'")
        self.expect(TokenType.COLON, "':'")
        ret = self.parse_type(allow_void=True)
        self.expect(TokenType.SEMI, "';'")
        return ExternDecl(tuple(segments), tuple(params), ret, self.pos_of(start))

    def parse_type(self, allow_void: bool) -> str:
        tok = self.expect_ident("type name")
        if tok.value not in VALID_TYPES or (tok.value == "void" and not allow_void):
            raise self.error(f"invalid type {tok.value!r}", tok)
        return tok.value

    def parse_function(self) -> FunctionDecl:
        tok = self.peek()
        visibility = "Private"
        if tok.is_keyword("public") or tok.is_keyword("private"):
            visibility = tok.value.capitalize()
            self.advance()
        fn_tok = self.peek()
        if not fn_tok.is_keyword("fn"):
            raise self.error("expected 'fn'", fn_tok)
        self.advance()
        name = self.expect_ident("function name")
        self.expect(TokenType.LPAREN, "'('")
        params: list[str] = []
        if self.peek().type is not TokenType.RPAREN:
            params.append(self.expect_ident("parameter name").value)
            while self.peek().type is TokenType.COMMA:
                self.advance()
                params.append(self.expect_ident("parameter name").value)
        self.expect(TokenType.RPAREN, "')'")
        body = self.parse_block()
        return FunctionDecl(
            name=name.value,
            visibility=visibility,
            params=tuple(params),
            body=body,
            file=self.file,
            pos=self.pos_of(name),
        )

    # statements -----------------------------------------------------------

    def parse_block(self) -> tuple[object, ...]:
        self.expect(TokenType.LBRACE, "'{'")
        stmts: list[object] = []
        while self.peek().type is not TokenType.RBRACE:
            if self.peek().type is TokenType.EOF:
                raise self.error("unterminated block")
            stmts.append(self.parse_stmt())
        self.advance()
        return tuple(stmts)

    def parse_stmt(self) -> object:
        tok = self.peek()
        if tok.is_keyword("let"):
            self.advance()
            name = self.expect_ident("variable name")
            self.expect(TokenType.ASSIGN, "'='")
            expr = self.parse_expr()
            self.expect(TokenType.SEMI, "';'")
            return LetStmt(name.value, expr, self.pos_of(name), is_decl=True)
        if tok.is_keyword("return"):
            self.advance()
            expr = None
            if self.peek().type is not TokenType.SEMI:
                expr = self.parse_expr()
            self.expect(TokenType.SEMI, "';'")
            return ReturnStmt(expr, self.pos_of(tok))
        if tok.is_keyword("throw"):
            self.advance()
            expr = self.parse_expr()
            self.expect(TokenType.SEMI, "';'")
            return ThrowStmt(expr, self.pos_of(tok))
        if tok.is_keyword("try"):
            self.advance()
            body = self.parse_block()
            catch_tok = self.peek()
            if not catch_tok.is_keyword("catch"):
                raise self.error("expected 'catch'", catch_tok)
            self.advance()
            self.expect(TokenType.LPAREN, "'('")
            catch_name = self.expect_ident("catch parameter")
            self.expect(TokenType.RPAREN, "')'")
            handler = self.parse_block()
            return TryStmt(body, catch_name.value, self.pos_of(catch_name), handler, self.pos_of(tok))
        if tok.is_keyword("if"):
            self.advance()
            self.expect(TokenType.LPAREN, "'('")
            cond = self.parse_expr()
            self.expect(TokenType.RPAREN, "')'")
            then_body = self.parse_block()
            else_body = None
            if self.peek().is_keyword("else"):
                self.advance()
                else_body = self.parse_block()
            return IfStmt(cond, then_body, else_body, self.pos_of(tok))
        # assignment: Name "=" expr ";"
        if (
            tok.type is TokenType.IDENT
            and tok.value not in KEYWORDS
            and self.peek(1).type is TokenType.ASSIGN
        ):
            name = self.advance()
            self.advance()  # '='
            expr = self.parse_expr()
            self.expect(TokenType.SEMI, "';'")
            return LetStmt(name.value, expr, self.pos_of(name), is_decl=False)
        expr = self.parse_expr()
        semi = self.expect(TokenType.SEMI, "';'")
        return ExprStmt(expr, self.pos_of(semi))

    # expressions ----------------------------------------------------------

    def parse_expr(self) -> object:
        left = self.parse_postfix()
        while self.peek().type is TokenType.PLUS:
            plus = self.advance()
            right = self.parse_postfix()
            left = Concat(left, right, self.pos_of(plus))
        return left

    def parse_postfix(self) -> object:
        expr = self.parse_primary()
        while self.peek().type is TokenType.DOT:
            dot = self.advance()
            method = self.expect_ident("method name")
            self.expect(TokenType.LPAREN, "'(' after method name")
            args = self.parse_args()
            expr = _MethodCall(expr, method.value, args, self.pos_of(dot))
        return expr

    def parse_primary(self) -> object:
        tok = self.peek()
        if tok.type is TokenType.STRING:
            self.advance()
            return StringLit(tok.value, self.pos_of(tok))
        if tok.type is TokenType.IDENT and tok.value not in KEYWORDS:
            # Collect a dotted chain as long as each '.'-segment is followed
            # by another segment; the chain form is decided by what follows.
            segments = [self.advance()]
            while (
                self.peek().type is TokenType.DOT
                and self.peek(1).type is TokenType.IDENT
                and self.peek(1).value not in KEYWORDS
                and self.peek(2).type in (TokenType.DOT, TokenType.LPAREN)
            ):
                self.advance()
                segments.append(self.advance())
                if self.peek().type is TokenType.LPAREN:
                    break
            if self.peek().type is TokenType.LPAREN:
                self.advance()
                args = self.parse_args()
                pos = self.pos_of(segments[0])
                if len(segments) == 1:
                    return _NameCall(segments[0].value, args, pos)
                return _DottedCall(tuple(s.value for s in segments), args, pos)
            if len(segments) > 1:
                raise self.error("qualified name must be called", segments[0])
            return NameRef(segments[0].value, self.pos_of(segments[0]))
        raise self.error(f"expected expression, found {tok.value!r}", tok)

    def parse_args(self) -> tuple[object, ...]:
        args: list[object] = []
        if self.peek().type is not TokenType.RPAREN:
            args.append(self.parse_expr())
            while self.peek().type is TokenType.COMMA:
                self.advance()
                args.append(self.parse_expr())
        self.expect(TokenType.RPAREN, "')'")
        return tuple(args)


def parse(files: Sequence[SourceFile]) -> MiniProgram:
    """Parse and link a MiniLang project; all calls are resolved."""
    program = MiniProgram()
    raw_functions: list[FunctionDecl] = []
    extern_by_name: dict[str, ExternDecl] = {}
    for src in files:
        program.sources[src.path] = tuple(src.text.splitlines())
        try:
            tokens = tokenize(src.text, src.path)
        except LexError as exc:
            raise ParseError(exc.message, Pos(src.path, exc.line, exc.column)) from exc
        externs, functions = _Parser(tokens, src.path).parse_program()
        for ext in externs:
            if ext.name in extern_by_name:
                raise DuplicateDefinitionError(f"duplicate extern {ext.name}", ext.pos)
            extern_by_name[ext.name] = ext
            program.externs.append(ext)
        raw_functions.extend(functions)

    fn_names: set[str] = set()
    for fn in raw_functions:
        if fn.name in fn_names:
            raise DuplicateDefinitionError(f"duplicate function {fn.name}", fn.pos)
        fn_names.add(fn.name)

    resolver = _Resolver(extern_by_name, fn_names)
    for fn in raw_functions:
        program.functions.append(
            FunctionDecl(
                name=fn.name,
                visibility=fn.visibility,
                params=fn.params,
                body=tuple(resolver.stmt(s) for s in fn.body),
                file=fn.file,
                pos=fn.pos,
            )
        )
    return program


class _Resolver:
    """Rewrites raw call forms into ExternCall / InternalCall."""

    def __init__(self, externs: dict[str, ExternDecl], fn_names: set[str]) -> None:
        self.externs = externs
        self.fn_names = fn_names
        self.by_method: dict[str, list[ExternDecl]] = {}
        for ext in externs.values():
            self.by_method.setdefault(ext.method, []).append(ext)

    def stmt(self, s: object) -> object:
        if isinstance(s, LetStmt):
            return LetStmt(s.name, self.expr(s.expr), s.pos, s.is_decl)
        if isinstance(s, ReturnStmt):
            return ReturnStmt(self.expr(s.expr) if s.expr is not None else None, s.pos)
        if isinstance(s, ThrowStmt):
            return ThrowStmt(self.expr(s.expr), s.pos)
        if isinstance(s, TryStmt):
            return TryStmt(
                tuple(self.stmt(x) for x in s.body),
                s.catch_name,
                s.catch_pos,
                tuple(self.stmt(x) for x in s.handler),
                s.pos,
            )
        if isinstance(s, IfStmt):
            return IfStmt(
                self.expr(s.cond),
                tuple(self.stmt(x) for x in s.then_body),
                tuple(self.stmt(x) for x in s.else_body) if s.else_body is not None else None,
                s.pos,
            )
        if isinstance(s, ExprStmt):
            return ExprStmt(self.expr(s.expr), s.pos)
        raise AssertionError(f"unknown statement {s!r}")

    def expr(self, e: object) -> object:
        if isinstance(e, (StringLit, NameRef)):
            return e
        if isinstance(e, Concat):
            return Concat(self.expr(e.left), self.expr(e.right), e.pos)
        if isinstance(e, _NameCall):
            args = tuple(self.expr(a) for a in e.args)
            if e.name not in self.fn_names:
                raise UnresolvedCallError(f"call to undefined function {e.name}", e.pos)
            return InternalCall(e.name, args, e.pos)
        if isinstance(e, _DottedCall):
            args = tuple(self.expr(a) for a in e.args)
            qname = ".".join(e.segments)
            ext = self.externs.get(qname)
            if ext is not None:
                if len(ext.params) != len(args):
                    raise UnresolvedCallError(
                        f"extern {qname} expects {len(ext.params)} argument(s), got {len(args)}", e.pos
                    )
                return ExternCall(ext, args, None, e.pos)
            if len(e.segments) == 2:
                receiver = NameRef(e.segments[0], e.pos)
                return self._receiver_call(receiver, e.segments[1], args, e.pos)
            raise UnresolvedCallError(f"no extern named {qname}", e.pos)
        if isinstance(e, _MethodCall):
            receiver = self.expr(e.receiver)
            args = tuple(self.expr(a) for a in e.args)
            return self._receiver_call(receiver, e.method, args, e.pos)
        raise AssertionError(f"unknown expression {e!r}")

    def _receiver_call(self, receiver: object, method: str, args: tuple, pos: Pos) -> ExternCall:
        matches = [ext for ext in self.by_method.get(method, []) if len(ext.params) == len(args)]
        if not matches:
            raise UnresolvedCallError(
                f"no extern with method {method} taking {len(args)} argument(s)", pos
            )
        if len(matches) > 1:
            names = ", ".join(sorted(m.name for m in matches))
            raise UnresolvedCallError(f"ambiguous receiver call {method}: {names}", pos)
        return ExternCall(matches[0], args, receiver, pos)


def load_project(root: str) -> list[SourceFile]:
    """Read all .ml files under a project root, sorted by relative path."""
    import os

    files: list[SourceFile] = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for fname in sorted(filenames):
            if not fname.endswith(".ml"):
                continue
            full = os.path.join(dirpath, fname)
            rel = os.path.relpath(full, root).replace(os.sep, "/")
            with open(full, "r", encoding="utf-8") as fp:
                files.append(SourceFile(rel, fp.read()))
    return files
