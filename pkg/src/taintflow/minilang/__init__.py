"""MiniLang frontend: parser and dataflow-graph builder."""

from .dfg import build_dfg
from .parser import MiniProgram, ParseError, SourceFile, is_test_file, load_project, parse

__all__ = [
    "MiniProgram",
    "ParseError",
    "SourceFile",
    "build_dfg",
    "is_test_file",
    "load_project",
    "parse",
]
