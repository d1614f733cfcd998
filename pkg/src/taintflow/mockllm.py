"""Deterministic rule-table chat backend for hermetic runs and CI.

The mock reads the same prompts a real model would: it re-parses the CSV
rows (or source/sink lines) out of the user message and answers from a rule
table, so the production prompt-building and response-parsing paths are
exercised end to end. Unknown APIs get no label.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

from .contextual import SINK_LINE_PREFIX, SOURCE_LINE_PREFIX
from .labeling import EXTERNAL_ROWS_HEADER, INTERNAL_ROWS_HEADER
from .llm import ChatMessage, ChatRole


class MockRuleError(Exception):
    pass


class MockChatBackend:
    """Answers labeling and verdict prompts from a JSON rule table.

    Rule file shape::

        {
          "external": [{"package": ..., "class": ..., "method": ...,
                        "label": "Source"|"Sink"|"TaintPropagator",
                        "sink_args": [0, -1]}],
          "internal": [{"function": ..., "positions": [0]}],
          "verdicts": [{"source_contains": ..., "sink_contains": ...,
                        "verdict": false, "source_is_fp": true,
                        "explanation": ...}],
          "default_verdict": true
        }
    """

    def __init__(self, rules: Optional[dict] = None) -> None:
        rules = rules or {}
        self.external: dict[tuple[str, str, str], dict] = {}
        for entry in rules.get("external", []):
            key = (entry["package"], entry["class"], entry["method"])
            self.external[key] = entry
        self.internal: dict[str, list[int]] = {
            entry["function"]: list(entry.get("positions", []))
            for entry in rules.get("internal", [])
        }
        self.verdict_rules: list[dict] = list(rules.get("verdicts", []))
        self.default_verdict: bool = bool(rules.get("default_verdict", True))
        self.calls = 0
        self.requests: list[Sequence[ChatMessage]] = []

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatBackend":
        with open(path, "r", encoding="utf-8") as fp:
            return cls(json.load(fp))

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        self.calls += 1
        self.requests.append(messages)
        prompt = next((m.content for m in messages if m.role is ChatRole.USER), "")
        if EXTERNAL_ROWS_HEADER in prompt:
            return self._label_external(prompt)
        if INTERNAL_ROWS_HEADER in prompt:
            return self._label_internal(prompt)
        if any(line.startswith(SOURCE_LINE_PREFIX) for line in prompt.splitlines()):
            return self._verdict(prompt)
        raise MockRuleError("mock backend cannot interpret this prompt")

    def _label_external(self, prompt: str) -> str:
        rows = _rows_after(prompt, EXTERNAL_ROWS_HEADER)
        out = []
        for row in rows:
            parts = row.split(",", 4)
            if len(parts) < 5:
                continue
            index, package, cls, method = parts[0], parts[1], parts[2], parts[3]
            rule = self.external.get((package, cls, method))
            if rule is None:
                continue
            answer: dict = {
                "api_index": int(index),
                "label": rule["label"],
                "explanation": rule.get("explanation", "rule table"),
            }
            if rule.get("sink_args") is not None:
                answer["sink_args"] = rule["sink_args"]
            out.append(answer)
        return json.dumps(out)

    def _label_internal(self, prompt: str) -> str:
        rows = _rows_after(prompt, INTERNAL_ROWS_HEADER)
        out = []
        for row in rows:
            parts = row.split(",", 3)
            if len(parts) < 4:
                continue
            index, function, position = parts[0], parts[1], parts[2]
            if int(position) in self.internal.get(function, []):
                out.append({"api_index": int(index), "label": "Source", "explanation": "rule table"})
        return json.dumps(out)

    def _verdict(self, prompt: str) -> str:
        source_line = sink_line = ""
        for line in prompt.splitlines():
            if line.startswith(SOURCE_LINE_PREFIX) and not source_line:
                source_line = line
            elif line.startswith(SINK_LINE_PREFIX) and not sink_line:
                sink_line = line
        chosen: Optional[dict] = None
        for rule in self.verdict_rules:
            if "source_contains" in rule and rule["source_contains"] not in source_line:
                continue
            if "sink_contains" in rule and rule["sink_contains"] not in sink_line:
                continue
            if "anywhere_contains" in rule and rule["anywhere_contains"] not in prompt:
                continue
            chosen = rule
            break
        if chosen is None:
            body = {
                "explanation": "no rule matched; default verdict",
                "verdict": self.default_verdict,
                "source_is_fp": False,
                "sink_is_fp": False,
            }
        else:
            verdict = bool(chosen.get("verdict", self.default_verdict))
            body = {
                "explanation": chosen.get("explanation", "rule table"),
                "verdict": verdict,
                "source_is_fp": bool(chosen.get("source_is_fp", False)) and not verdict,
                "sink_is_fp": bool(chosen.get("sink_is_fp", False)) and not verdict,
            }
        # fenced on purpose: downstream parsing must strip fences
        return "```json\n" + json.dumps(body) + "\n```"


def _rows_after(prompt: str, header: str) -> list[str]:
    lines = prompt.splitlines()
    try:
        start = lines.index(header) + 1
    except ValueError:
        return []
    rows = []
    for line in lines[start:]:
        if not line.strip():
            break
        rows.append(line.strip())
    return rows
