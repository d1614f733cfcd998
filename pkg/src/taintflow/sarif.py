"""SARIF 2.1.0 output: one result per alert with a codeFlow over the path."""
from __future__ import annotations

from typing import Iterable

from . import __version__
from .core import Alert
from .contextual import describe_endpoint
from .labeling import cwe_info

SARIF_SCHEMA = "https://raw.githubusercontent.com/oasis-tcs/sarif-spec/master/Schemata/sarif-schema-2.1.0.json"


class MissingLocationError(Exception):
    pass


def emit_sarif(alerts: Iterable[Alert], tool_name: str = "taintflow") -> dict:
    alerts = list(alerts)
    rules: dict[str, dict] = {}
    results = []
    for alert in alerts:
        cwe = alert.path.cwe
        if cwe.value not in rules:
            info = cwe_info(cwe)
            rules[cwe.value] = {
                "id": cwe.value,
                "name": info["name"].replace(" ", ""),
                "shortDescription": {"text": info["name"]},
                "fullDescription": {"text": info["description"]},
            }
        results.append(_result(alert))
    return {
        "version": "2.1.0",
        "$schema": SARIF_SCHEMA,
        "runs": [
            {
                "tool": {
                    "driver": {
                        "name": tool_name,
                        "version": __version__,
                        "rules": [rules[k] for k in sorted(rules)],
                    }
                },
                "results": results,
            }
        ],
    }


def _result(alert: Alert) -> dict:
    source = describe_endpoint(alert.path.source_spec)
    sink = describe_endpoint(alert.path.sink_spec)
    flow_locations = [
        {"location": _location(alert, step, f"step {i + 1}")}
        for i, step in enumerate(alert.steps)
    ]
    return {
        "ruleId": alert.path.cwe.value,
        "level": "error",
        "message": {
            "text": f"{alert.path.cwe.value}: unsanitized flow from {source} to {sink}"
        },
        "locations": [_location(alert, alert.steps[-1], None)],
        "codeFlows": [{"threadFlows": [{"locations": flow_locations}]}],
        "partialFingerprints": {"alertId": alert.id},
    }


def _location(alert: Alert, step, message: str | None) -> dict:
    if not step.file:
        raise MissingLocationError(f"alert {alert.id}: node {step.node_id} has no file")
    loc: dict = {
        "physicalLocation": {
            "artifactLocation": {"uri": step.file},
            "region": {"startLine": step.line, "startColumn": step.column},
        }
    }
    if message is not None:
        text = f"{message}: {step.code}" if step.code else message
        loc["message"] = {"text": text}
    return loc
