"""Taint-analysis toolkit: dataflow graphs, LLM-inferred taint specs, an
unsanitized-path engine, contextual alert filtering, and evaluation metrics."""

__version__ = "0.1.0"
