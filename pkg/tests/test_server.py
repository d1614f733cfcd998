import json
import threading
import urllib.error
import urllib.request
from pathlib import Path

import pytest

from taintflow.server import make_server


def write_alerts_file(tmp_path: Path, alerts):
    payload = {"meta": {"project": "p", "cwe": "CWE-78"}, "alerts": alerts}
    (tmp_path / "alerts.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def alert_obj(alert_id, source_sig, sink_sig, source_loc, sink_loc):
    def spec(sig, position):
        package, cls, method = sig
        obj = {
            "node_type": "Argument" if position is not None else "ReturnValue",
            "package": package,
            "class": cls,
            "method": method,
            "signature": ["String"],
            "role": "Sink" if position is not None else "Source",
            "cwe": "CWE-78",
        }
        if position is not None:
            obj["position"] = position
        return obj

    return {
        "id": alert_id,
        "project": "p",
        "cwe": "CWE-78",
        "path": {
            "nodes": [0, 1],
            "source_spec": spec(source_sig, None),
            "sink_spec": spec(sink_sig, 0),
        },
        "steps": [
            {"node_id": 0, "file": source_loc[0], "line": source_loc[1], "column": 1, "function": "f", "code": "s"},
            {"node_id": 1, "file": sink_loc[0], "line": sink_loc[1], "column": 1, "function": "g", "code": "t"},
        ],
        "triage": "Unreviewed",
    }


THREE_ALERTS = [
    alert_obj("a1", ("s", "S", "get"), ("t", "T", "put"), ("a.ml", 1), ("z.ml", 9)),
    alert_obj("a2", ("s", "S", "get"), ("t", "T", "put"), ("a.ml", 1), ("z.ml", 9)),
    alert_obj("a3", ("s", "S", "other"), ("t", "T", "put"), ("b.ml", 2), ("z.ml", 30)),
]


@pytest.fixture()
def server(tmp_path):
    write_alerts_file(tmp_path, THREE_ALERTS)
    httpd = make_server(tmp_path)
    thread = threading.Thread(target=httpd.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{httpd.server_address[1]}"
    yield base, tmp_path
    httpd.shutdown()
    httpd.server_close()


def get(base, path):
    with urllib.request.urlopen(base + path) as resp:
        return json.loads(resp.read())


def get_bytes(base, path):
    with urllib.request.urlopen(base + path) as resp:
        return resp.read()


def post(base, path, body):
    req = urllib.request.Request(
        base + path, data=json.dumps(body).encode(), method="POST",
        headers={"Content-Type": "application/json"},
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def test_listing_groups_by_sink_key(server):
    base, _ = server
    listing = get(base, "/api/alerts")
    assert len(listing["alerts"]) == 3
    groups = {g["sink_key"]: g["alert_ids"] for g in listing["groups"]}
    assert len(groups) == 2
    sizes = sorted(len(ids) for ids in groups.values())
    assert sizes == [1, 2]
    # a1 and a2 share sink identity and location
    shared = next(ids for ids in groups.values() if len(ids) == 2)
    assert set(shared) == {"a1", "a2"}


def test_triage_round_trip_and_persistence(server):
    base, tmp_path = server
    assert post(base, "/api/alerts/a1/triage", {"triage": "FalsePositive"}) == {
        "id": "a1",
        "triage": "FalsePositive",
    }
    listing = get(base, "/api/alerts")
    by_id = {a["id"]: a for a in listing["alerts"]}
    assert by_id["a1"]["triage"] == "FalsePositive"
    state = json.loads((tmp_path / "triage_state.json").read_text())
    assert state["a1"] == "FalsePositive"
    # no temp file left behind by the atomic write
    assert list(tmp_path.glob("*.tmp")) == []


def test_mark_similar_by_sink_flips_all_sharers(server):
    base, _ = server
    result = post(base, "/api/alerts/a1/mark-similar", {"by": "sink", "triage": "FalsePositive"})
    assert set(result["updated"]) == {"a1", "a2"}
    by_id = {a["id"]: a for a in get(base, "/api/alerts")["alerts"]}
    assert by_id["a1"]["triage"] == by_id["a2"]["triage"] == "FalsePositive"
    assert by_id["a3"]["triage"] == "Unreviewed"


def test_mark_similar_by_source(server):
    base, _ = server
    result = post(base, "/api/alerts/a3/mark-similar", {"by": "source", "triage": "TruePositive"})
    assert result["updated"] == ["a3"]


def test_export_round_trips_state(server, tmp_path):
    base, results_dir = server
    post(base, "/api/alerts/a2/triage", {"triage": "TruePositive"})
    export = get_bytes(base, "/api/export")
    payload = json.loads(export)
    by_id = {a["id"]: a for a in payload["alerts"]}
    assert by_id["a2"]["triage"] == "TruePositive"
    # serving the export from a fresh directory reproduces identical state
    second_dir = tmp_path / "second"
    second_dir.mkdir()
    (second_dir / "alerts.json").write_bytes(export)
    httpd = make_server(second_dir)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    try:
        base2 = f"http://127.0.0.1:{httpd.server_address[1]}"
        assert get_bytes(base2, "/api/export") == export
    finally:
        httpd.shutdown()
        httpd.server_close()


def test_unknown_alert_is_404(server):
    base, _ = server
    with pytest.raises(urllib.error.HTTPError) as err:
        post(base, "/api/alerts/nope/triage", {"triage": "TruePositive"})
    assert err.value.code == 404


def test_malformed_bodies_are_400(server):
    base, _ = server
    with pytest.raises(urllib.error.HTTPError) as err:
        post(base, "/api/alerts/a1/triage", {"triage": "Maybe"})
    assert err.value.code == 400
    with pytest.raises(urllib.error.HTTPError) as err:
        post(base, "/api/alerts/a1/mark-similar", {"triage": "TruePositive", "by": "vibes"})
    assert err.value.code == 400
    req = urllib.request.Request(
        base + "/api/alerts/a1/triage", data=b"{broken", method="POST"
    )
    with pytest.raises(urllib.error.HTTPError) as err:
        urllib.request.urlopen(req)
    assert err.value.code == 400


def test_state_reloaded_on_restart(server):
    base, results_dir = server
    post(base, "/api/alerts/a3/triage", {"triage": "FalsePositive"})
    httpd = make_server(results_dir)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    try:
        base2 = f"http://127.0.0.1:{httpd.server_address[1]}"
        by_id = {a["id"]: a for a in get(base2, "/api/alerts")["alerts"]}
        assert by_id["a3"]["triage"] == "FalsePositive"
    finally:
        httpd.shutdown()
        httpd.server_close()


def test_filtered_alerts_preferred_over_raw(tmp_path):
    write_alerts_file(tmp_path, THREE_ALERTS)
    filtered = {"meta": {"project": "p", "cwe": "CWE-78"}, "alerts": THREE_ALERTS[:1]}
    (tmp_path / "filtered_alerts.json").write_text(json.dumps(filtered))
    httpd = make_server(tmp_path)
    threading.Thread(target=httpd.serve_forever, daemon=True).start()
    try:
        base = f"http://127.0.0.1:{httpd.server_address[1]}"
        assert len(get(base, "/api/alerts")["alerts"]) == 1
    finally:
        httpd.shutdown()
        httpd.server_close()
