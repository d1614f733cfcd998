"""Tokenizer for MiniLang source files."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class TokenType(Enum):
    IDENT = "ident"
    STRING = "string"
    LPAREN = "("
    RPAREN = ")"
    LBRACE = "{"
    RBRACE = "}"
    SEMI = ";"
    COMMA = ","
    DOT = "."
    PLUS = "+"
    ASSIGN = "="
    COLON = ":"
    EOF = "eof"


KEYWORDS = {
    "extern", "public", "private", "fn", "let", "return",
    "throw", "try", "catch", "if", "else",
}

_PUNCT = {
    "(": TokenType.LPAREN,
    ")": TokenType.RPAREN,
    "{": TokenType.LBRACE,
    "}": TokenType.RBRACE,
    ";": TokenType.SEMI,
    ",": TokenType.COMMA,
    ".": TokenType.DOT,
    "+": TokenType.PLUS,
    "=": TokenType.ASSIGN,
    ":": TokenType.COLON,
}


@dataclass(frozen=True)
class Token:
    type: TokenType
    value: str
    line: int
    column: int

    def is_keyword(self, word: str) -> bool:
        return self.type is TokenType.IDENT and self.value == word


class LexError(Exception):
    def __init__(self, message: str, file: str, line: int, column: int) -> None:
        super().__init__(f"{file}:{line}:{column}: {message}")
        self.message = message
        self.file = file
        self.line = line
        self.column = column


def tokenize(text: str, file: str = "<input>") -> list[Token]:
    tokens: list[Token] = []
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch in " \t\r":
            i += 1
            col += 1
            continue
        if ch in _PUNCT:
            tokens.append(Token(_PUNCT[ch], ch, line, col))
            i += 1
            col += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            i += 1
            col += 1
            buf: list[str] = []
            while i < n and text[i] != '"':
                c = text[i]
                if c == "\n":
                    raise LexError("unterminated string literal", file, start_line, start_col)
                if c == "\\" and i + 1 < n:
                    esc = text[i + 1]
                    buf.append({"n": "\n", "t": "\t", '"': '"', "\\": "\\"}.get(esc, esc))
                    i += 2
                    col += 2
                    continue
                buf.append(c)
                i += 1
                col += 1
            if i >= n:
                raise LexError("unterminated string literal", file, start_line, start_col)
            i += 1
            col += 1
            tokens.append(Token(TokenType.STRING, "".join(buf), start_line, start_col))
            continue
        if ch.isalpha() or ch == "_":
            start_col = col
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(Token(TokenType.IDENT, text[i:j], line, start_col))
            col += j - i
            i = j
            continue
        raise LexError(f"unexpected character {ch!r}", file, line, col)
    tokens.append(Token(TokenType.EOF, "", line, col))
    return tokens
