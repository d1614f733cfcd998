"""Triage HTTP API over a results directory, plus static hosting for the UI.

Endpoints:
  GET  /api/alerts                       alert list with sink-key groups
  POST /api/alerts/{id}/triage           {"triage": "TruePositive"|...}
  POST /api/alerts/{id}/mark-similar     {"by": "source"|"sink", "triage": ...}
  GET  /api/export                       alerts file with triage state baked in

Triage state persists to triage_state.json in the results directory; every
mutation rewrites it atomically (write-temp-then-rename).
"""
from __future__ import annotations

import json
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional

TRIAGE_VALUES = ("Unreviewed", "TruePositive", "FalsePositive")
STATE_FILE = "triage_state.json"


def _spec_key(spec_obj: dict) -> str:
    sig = ",".join(spec_obj.get("signature", []))
    pos = spec_obj.get("position")
    return (
        f'{spec_obj["package"]}.{spec_obj["class"]}.{spec_obj["method"]}({sig})'
        f"@{'ret' if pos is None else pos}"
    )


def source_key_of(alert_obj: dict) -> str:
    step = alert_obj["steps"][0]
    return f'{_spec_key(alert_obj["path"]["source_spec"])}|{step["file"]}:{step["line"]}'


def sink_key_of(alert_obj: dict) -> str:
    step = alert_obj["steps"][-1]
    return f'{_spec_key(alert_obj["path"]["sink_spec"])}|{step["file"]}:{step["line"]}'


class TriageStore:
    """Alert objects plus mutable triage state with atomic persistence."""

    def __init__(self, results_dir: Path, alerts_file: Optional[Path] = None) -> None:
        self.results_dir = Path(results_dir)
        self.alerts_path = alerts_file or self._default_alerts_file()
        with open(self.alerts_path, "r", encoding="utf-8") as fp:
            payload = json.load(fp)
        self.meta: dict = payload.get("meta", {})
        self.alerts: list[dict] = payload.get("alerts", [])
        self._by_id = {a["id"]: a for a in self.alerts}
        self._lock = threading.Lock()
        self._load_state()

    def _default_alerts_file(self) -> Path:
        for name in ("filtered_alerts.json", "alerts.json"):
            candidate = self.results_dir / name
            if candidate.is_file():
                return candidate
        raise FileNotFoundError(f"no alerts file in {self.results_dir}")

    def _load_state(self) -> None:
        state_path = self.results_dir / STATE_FILE
        if not state_path.is_file():
            return
        with open(state_path, "r", encoding="utf-8") as fp:
            state = json.load(fp)
        for alert_id, triage in state.items():
            alert = self._by_id.get(alert_id)
            if alert is not None and triage in TRIAGE_VALUES:
                alert["triage"] = triage

    def _persist(self) -> None:
        # caller holds the lock; single writer at a time
        state = {a["id"]: a.get("triage", "Unreviewed") for a in self.alerts}
        state_path = self.results_dir / STATE_FILE
        tmp_path = state_path.with_suffix(".json.tmp")
        with open(tmp_path, "w", encoding="utf-8") as fp:
            json.dump(state, fp, indent=2, sort_keys=True)
            fp.write("\n")
            fp.flush()
            os.fsync(fp.fileno())
        os.replace(tmp_path, state_path)

    def listing(self) -> dict:
        groups: dict[str, list[str]] = {}
        annotated = []
        for alert in self.alerts:
            skey = sink_key_of(alert)
            groups.setdefault(skey, []).append(alert["id"])
            entry = dict(alert)
            entry["sink_key"] = skey
            entry["source_key"] = source_key_of(alert)
            annotated.append(entry)
        return {
            "meta": self.meta,
            "alerts": annotated,
            "groups": [{"sink_key": k, "alert_ids": groups[k]} for k in sorted(groups)],
        }

    def set_triage(self, alert_id: str, triage: str) -> dict:
        with self._lock:
            alert = self._by_id.get(alert_id)
            if alert is None:
                raise KeyError(alert_id)
            alert["triage"] = triage
            self._persist()
            return {"id": alert_id, "triage": triage}

    def mark_similar(self, alert_id: str, by: str, triage: str) -> dict:
        key_fn = source_key_of if by == "source" else sink_key_of
        with self._lock:
            anchor = self._by_id.get(alert_id)
            if anchor is None:
                raise KeyError(alert_id)
            anchor_key = key_fn(anchor)
            updated = []
            for alert in self.alerts:
                if key_fn(alert) == anchor_key:
                    alert["triage"] = triage
                    updated.append(alert["id"])
            self._persist()
            return {"updated": updated, "triage": triage}

    def export(self) -> bytes:
        payload = {"meta": self.meta, "alerts": self.alerts}
        return (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("utf-8")


class _Handler(BaseHTTPRequestHandler):
    store: TriageStore
    ui_dir: Optional[Path] = None

    # quiet by default; tests and scripted runs don't want request logs
    def log_message(self, fmt: str, *args) -> None:
        pass

    def _send_json(self, payload, status: int = 200) -> None:
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status)

    def _read_body(self) -> Optional[dict]:
        try:
            length = int(self.headers.get("Content-Length", "0"))
            data = json.loads(self.rfile.read(length) or b"{}")
            return data if isinstance(data, dict) else None
        except (ValueError, json.JSONDecodeError):
            return None

    def do_GET(self) -> None:  # noqa: N802 (BaseHTTPRequestHandler API)
        if self.path == "/api/alerts":
            self._send_json(self.store.listing())
        elif self.path == "/api/export":
            self._send_json(self.store.export())
        elif self.path.startswith("/api/"):
            self._error(404, "unknown endpoint")
        else:
            self._serve_static()

    def do_POST(self) -> None:  # noqa: N802
        parts = [p for p in self.path.split("/") if p]
        if len(parts) == 4 and parts[:2] == ["api", "alerts"] and parts[3] in ("triage", "mark-similar"):
            alert_id, action = parts[2], parts[3]
            body = self._read_body()
            if body is None:
                return self._error(400, "malformed JSON body")
            triage = body.get("triage")
            if triage not in TRIAGE_VALUES:
                return self._error(400, f"triage must be one of {TRIAGE_VALUES}")
            try:
                if action == "triage":
                    return self._send_json(self.store.set_triage(alert_id, triage))
                by = body.get("by")
                if by not in ("source", "sink"):
                    return self._error(400, "by must be 'source' or 'sink'")
                return self._send_json(self.store.mark_similar(alert_id, by, triage))
            except KeyError:
                return self._error(404, f"unknown alert {alert_id}")
        return self._error(404, "unknown endpoint")

    def _serve_static(self) -> None:
        if self.ui_dir is None:
            return self._error(404, "no UI bundled; use the /api endpoints")
        rel = self.path.lstrip("/") or "index.html"
        target = (self.ui_dir / rel).resolve()
        if not str(target).startswith(str(self.ui_dir.resolve())) or not target.is_file():
            return self._error(404, "not found")
        body = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)


def make_server(
    results_dir: Path,
    bind: tuple[str, int] = ("127.0.0.1", 0),
    ui_dir: Optional[Path] = None,
    alerts_file: Optional[Path] = None,
) -> ThreadingHTTPServer:
    store = TriageStore(Path(results_dir), alerts_file)
    handler = type("BoundHandler", (_Handler,), {"store": store, "ui_dir": ui_dir})
    return ThreadingHTTPServer(bind, handler)


def serve_api(
    results_dir: Path,
    bind: tuple[str, int],
    ui_dir: Optional[Path] = None,
    alerts_file: Optional[Path] = None,
) -> None:
    httpd = make_server(results_dir, bind, ui_dir, alerts_file)
    host, port = httpd.server_address[0], httpd.server_address[1]
    print(f"triage API listening on http://{host}:{port}/")
    try:
        httpd.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        httpd.server_close()
