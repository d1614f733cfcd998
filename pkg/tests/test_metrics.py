import io
import json

import pytest
from hypothesis import given, strategies as st

from taintflow.core import (
    Alert,
    ApiSignature,
    Cwe,
    PathStep,
    Role,
    SpecNodeType,
    TaintPath,
    TaintSpec,
)
from taintflow.labeling import LabeledSpecs
from taintflow.metrics import (
    FixLocation,
    ManifestFormatError,
    ManifestValidationError,
    ProjectLabel,
    compute_metrics,
    count_vul_paths,
    load_manifest,
    metrics_table,
    spec_stats,
)


def manifest_io(payload) -> io.StringIO:
    return io.StringIO(json.dumps(payload))


MINIMAL = {
    "projects": [
        {
            "project_id": "p1",
            "cwe": "CWE-22",
            "fix_locations": [{"file": "a.ml", "function": "f"}],
        }
    ]
}


def test_load_minimal_manifest():
    manifest = load_manifest(manifest_io(MINIMAL))
    assert len(manifest.projects) == 1
    label = manifest.projects[0]
    assert label.project_id == "p1" and label.cwe is Cwe.CWE22
    assert label.fix_locations[0].function == "f"


def test_duplicate_project_id_rejected():
    payload = {"projects": [MINIMAL["projects"][0], MINIMAL["projects"][0]]}
    with pytest.raises(ManifestValidationError, match="duplicate"):
        load_manifest(manifest_io(payload))


def test_empty_fix_locations_rejected():
    payload = {"projects": [{"project_id": "p", "cwe": "CWE-22", "fix_locations": []}]}
    with pytest.raises(ManifestValidationError, match="non-empty"):
        load_manifest(manifest_io(payload))


def test_malformed_manifest_is_format_error():
    with pytest.raises(ManifestFormatError):
        load_manifest(io.StringIO("not json"))
    with pytest.raises(ManifestFormatError):
        load_manifest(manifest_io({"projects": [{"cwe": "CWE-22"}]}))


def mk_alert(alert_id, steps, cwe=Cwe.CWE22):
    source = TaintSpec(SpecNodeType.RETURN_VALUE, ApiSignature("s", "S", "get"), Role.SOURCE, cwe)
    sink = TaintSpec(SpecNodeType.ARGUMENT, ApiSignature("t", "T", "put", position=0), Role.SINK, cwe)
    return Alert(
        id=alert_id,
        project="p",
        path=TaintPath(tuple(range(len(steps))), source, sink, cwe),
        steps=tuple(
            PathStep(node_id=i, file=f, line=ln, column=1, function=fn, code="c")
            for i, (f, fn, ln) in enumerate(steps)
        ),
    )


def label(project_id="p", cwe=Cwe.CWE22, locations=(("fixed.ml", "patch"),)):
    return ProjectLabel(
        project_id=project_id,
        cwe=cwe,
        fix_locations=tuple(FixLocation(file=f, function=fn) for f, fn in locations),
    )


def test_count_vul_paths_sink_in_fixed_method():
    alert = mk_alert("a", [("x.ml", "f", 1), ("fixed.ml", "patch", 9)])
    assert count_vul_paths([alert], label()) == 1


def test_count_vul_paths_no_intersection():
    alert = mk_alert("a", [("x.ml", "f", 1), ("y.ml", "g", 2)])
    assert count_vul_paths([alert], label()) == 0


def test_count_vul_paths_counts_each_matching_alert():
    alerts = [
        mk_alert("a", [("fixed.ml", "patch", 1), ("y.ml", "g", 2)]),
        mk_alert("b", [("x.ml", "f", 1), ("fixed.ml", "patch", 3)]),
        mk_alert("c", [("x.ml", "f", 1), ("y.ml", "g", 2)]),
    ]
    assert count_vul_paths(alerts, label()) == 2


def test_count_vul_paths_line_range_refinement():
    loc = ProjectLabel(
        project_id="p",
        cwe=Cwe.CWE22,
        fix_locations=(FixLocation(file="fixed.ml", function="patch", lines=(5, 10)),),
    )
    inside = mk_alert("a", [("fixed.ml", "patch", 7), ("y.ml", "g", 1)])
    outside = mk_alert("b", [("fixed.ml", "patch", 2), ("y.ml", "g", 1)])
    assert count_vul_paths([inside], loc) == 1
    assert count_vul_paths([outside], loc) == 0


def test_count_invariant_under_nonmatching_reorder():
    steps = [("a.ml", "f", 1), ("b.ml", "g", 2), ("fixed.ml", "patch", 3)]
    shuffled = [steps[1], steps[0], steps[2]]
    assert count_vul_paths([mk_alert("a", steps)], label()) == count_vul_paths(
        [mk_alert("b", shuffled)], label()
    )


def vul_alert(i=0):
    return mk_alert(f"v{i}", [("entry.ml", "f", 1 + i), ("fixed.ml", "patch", 2 + i)])


def benign_alert(i=0):
    return mk_alert(f"b{i}", [("entry.ml", "f", 1 + i), ("other.ml", "g", 2 + i)])


def test_metrics_perfect_single_project():
    report = compute_metrics({"p1": ([vul_alert()], label("p1"))})
    assert report.detected == 1
    assert report.avg_fdr == 0.0
    assert report.avg_f1 == 1.0


def test_metrics_two_project_hand_computed():
    # P1: 3 paths, 1 vulnerable; P2: 2 paths, 0 vulnerable
    results = {
        "p1": ([vul_alert(), benign_alert(1), benign_alert(2)], label("p1")),
        "p2": ([benign_alert(3), benign_alert(4)], label("p2")),
    }
    report = compute_metrics(results)
    assert report.detected == 1
    assert report.avg_fdr == pytest.approx(5 / 6, abs=1e-12)
    assert report.avg_f1 == pytest.approx(0.25, abs=1e-12)


def test_zero_path_project_excluded_from_fdr_but_zero_f1():
    results = {
        "p1": ([vul_alert()], label("p1")),
        "p2": ([], label("p2")),
    }
    report = compute_metrics(results)
    p2 = next(m for m in report.per_project if m.project_id == "p2")
    assert p2.prec is None and p2.f1 == 0.0 and p2.rec == 0
    assert report.avg_fdr == 0.0  # only p1 contributes
    assert report.avg_f1 == 0.5
    only_empty = compute_metrics({"p": ([], label("p"))})
    assert only_empty.avg_fdr is None


def test_metrics_bounds():
    results = {
        "p1": ([vul_alert(), benign_alert(1)], label("p1")),
        "p2": ([benign_alert(2)], label("p2")),
        "p3": ([], label("p3")),
    }
    report = compute_metrics(results)
    assert 0 <= report.detected <= 3
    assert 0.0 <= report.avg_f1 <= 1.0
    assert report.avg_fdr is None or 0.0 <= report.avg_fdr <= 1.0


@given(extra=st.integers(min_value=1, max_value=5))
def test_adding_benign_paths_never_helps(extra):
    base = {"p": ([vul_alert()], label("p"))}
    padded = {"p": ([vul_alert()] + [benign_alert(i) for i in range(extra)], label("p"))}
    r_base = compute_metrics(base)
    r_padded = compute_metrics(padded)
    assert r_padded.avg_f1 <= r_base.avg_f1
    assert r_padded.avg_fdr >= r_base.avg_fdr


def spec_of(method, role, cwe=Cwe.CWE22):
    node_type = SpecNodeType.RETURN_VALUE if role is Role.SOURCE else SpecNodeType.ARGUMENT
    position = None if role is Role.SOURCE else 0
    return TaintSpec(node_type, ApiSignature("p", "C", method, position=position), role, cwe)


def labeled(cwe, sources=(), sinks=()):
    return LabeledSpecs(
        cwe=cwe,
        sources=[spec_of(m, Role.SOURCE, cwe) for m in sources],
        sinks=[spec_of(m, Role.SINK, cwe) for m in sinks],
    )


def test_spec_stats_disjoint_sets_all_unique():
    stats = spec_stats(
        {
            "p1": labeled(Cwe.CWE22, sources=("a", "b")),
            "p2": labeled(Cwe.CWE22, sources=("c",), sinks=("d", "e")),
        }
    )
    s = stats["CWE-22"]
    assert s["unique_sources"] == 3 and s["unique_sinks"] == 2
    assert s["recurring_sources"] == 0 and s["recurring_sinks"] == 0


def test_spec_stats_shared_sink_recurs():
    stats = spec_stats(
        {
            "p1": labeled(Cwe.CWE78, sinks=("exec",)),
            "p2": labeled(Cwe.CWE78, sinks=("exec",)),
        }
    )
    assert stats["CWE-78"]["recurring_sinks"] == 1
    assert stats["CWE-78"]["unique_sinks"] == 0


def test_spec_stats_mixed_counts():
    stats = spec_stats(
        {
            "p1": labeled(Cwe.CWE79, sources=("shared",)),
            "p2": labeled(Cwe.CWE79, sources=("shared",)),
            "p3": labeled(Cwe.CWE79, sources=("shared", "solo")),
        }
    )
    assert stats["CWE-79"]["unique_sources"] == 1
    assert stats["CWE-79"]["recurring_sources"] == 1


def test_metrics_table_has_cwe_rows_and_overall():
    results = {
        "p1": ([vul_alert()], label("p1", cwe=Cwe.CWE22)),
        "p2": ([benign_alert(1)], label("p2", cwe=Cwe.CWE78)),
    }
    table = metrics_table(results)
    lines = table.splitlines()
    assert "#Detected" in lines[0] and "AvgFDR" in lines[0] and "AvgF1" in lines[0]
    assert any(line.startswith("CWE-22") for line in lines)
    assert any(line.startswith("CWE-78") for line in lines)
    assert lines[-1].startswith("overall")
