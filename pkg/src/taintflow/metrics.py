"""Dataset manifests with fix-location labels, and the detection metrics
computed against them (#Detected, AvgFDR, AvgF1), plus spec-corpus stats."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional

from .core import Alert, Cwe
from .labeling import LabeledSpecs


class ManifestFormatError(Exception):
    pass


class ManifestValidationError(Exception):
    pass


@dataclass(frozen=True)
class FixLocation:
    file: str
    function: str
    lines: Optional[tuple[int, int]] = None  # optional refinement

    def matches(self, file: str, function: str, line: int) -> bool:
        if self.file != file or self.function != function:
            return False
        if self.lines is not None:
            lo, hi = self.lines
            return lo <= line <= hi
        return True


@dataclass(frozen=True)
class ProjectLabel:
    project_id: str
    cwe: Cwe
    fix_locations: tuple[FixLocation, ...]
    cve_id: Optional[str] = None
    metadata: dict = field(default_factory=dict, hash=False, compare=False)


@dataclass
class DatasetManifest:
    projects: list[ProjectLabel]

    def by_id(self) -> dict[str, ProjectLabel]:
        return {p.project_id: p for p in self.projects}


def load_manifest(fp: IO[str]) -> DatasetManifest:
    try:
        data = json.load(fp)
    except json.JSONDecodeError as exc:
        raise ManifestFormatError(f"invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or not isinstance(data.get("projects"), list):
        raise ManifestFormatError("manifest must be an object with a 'projects' array")
    projects: list[ProjectLabel] = []
    seen: set[str] = set()
    for entry in data["projects"]:
        try:
            project_id = entry["project_id"]
            cwe = Cwe(entry["cwe"])
            locations = tuple(
                FixLocation(
                    file=loc["file"],
                    function=loc["function"],
                    lines=tuple(loc["lines"]) if loc.get("lines") else None,
                )
                for loc in entry["fix_locations"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestFormatError(f"malformed project entry: {exc}") from exc
        if project_id in seen:
            raise ManifestValidationError(f"duplicate project_id {project_id}")
        seen.add(project_id)
        if not locations:
            raise ManifestValidationError(f"{project_id}: fix_locations must be non-empty")
        projects.append(
            ProjectLabel(
                project_id=project_id,
                cwe=cwe,
                fix_locations=locations,
                cve_id=entry.get("cve_id"),
                metadata=entry.get("metadata", {}),
            )
        )
    return DatasetManifest(projects=projects)


def count_vul_paths(alerts: Iterable[Alert], label: ProjectLabel) -> int:
    """Alerts whose path touches a fix location (match on file + function,
    optionally refined by a line range)."""
    count = 0
    for alert in alerts:
        if any(
            loc.matches(step.file, step.function, step.line)
            for step in alert.steps
            for loc in label.fix_locations
        ):
            count += 1
    return count


@dataclass
class ProjectMetrics:
    project_id: str
    n_paths: int
    n_vul_paths: int
    rec: int
    prec: Optional[float]
    f1: float


@dataclass
class MetricsReport:
    per_project: list[ProjectMetrics]
    detected: int
    avg_fdr: Optional[float]
    avg_f1: float

    def to_obj(self) -> dict:
        return {
            "detected": self.detected,
            "avg_fdr": self.avg_fdr,
            "avg_f1": self.avg_f1,
            "per_project": [
                {
                    "project_id": m.project_id,
                    "n_paths": m.n_paths,
                    "n_vul_paths": m.n_vul_paths,
                    "rec": m.rec,
                    "prec": m.prec,
                    "f1": m.f1,
                }
                for m in self.per_project
            ],
        }


def compute_metrics(results: dict[str, tuple[list[Alert], ProjectLabel]]) -> MetricsReport:
    """Detection metrics over one dataset.

    Rec(P) is 1 iff some path touches a fix location. Prec(P) is undefined
    (None, never NaN) for projects with no paths; those are excluded from
    AvgFDR. The F1 term is 0 whenever Rec is 0, so AvgF1 stays defined.
    """
    per_project: list[ProjectMetrics] = []
    for project_id in sorted(results):
        alerts, label = results[project_id]
        n_paths = len(alerts)
        n_vul = count_vul_paths(alerts, label)
        rec = 1 if n_vul > 0 else 0
        prec = (n_vul / n_paths) if n_paths > 0 else None
        if rec == 0 or prec is None or prec == 0:
            f1 = 0.0
        else:
            f1 = 2 * prec * rec / (prec + rec)
        per_project.append(ProjectMetrics(project_id, n_paths, n_vul, rec, prec, f1))
    detected = sum(m.rec for m in per_project)
    fdrs = [1 - m.prec for m in per_project if m.prec is not None]
    avg_fdr = sum(fdrs) / len(fdrs) if fdrs else None
    avg_f1 = sum(m.f1 for m in per_project) / len(per_project) if per_project else 0.0
    return MetricsReport(per_project=per_project, detected=detected, avg_fdr=avg_fdr, avg_f1=avg_f1)


def spec_stats(spec_sets: dict[str, LabeledSpecs]) -> dict[str, dict[str, int]]:
    """Per CWE: how many source/sink specs occur in exactly one project
    (unique) versus in at least two (recurring)."""
    occurrences: dict[tuple, set[str]] = {}
    kinds: dict[tuple, tuple[str, str]] = {}
    for project_id, specs in spec_sets.items():
        for role_name, bucket in (("sources", specs.sources), ("sinks", specs.sinks)):
            for spec in bucket:
                key = spec.identity()
                occurrences.setdefault(key, set()).add(project_id)
                kinds[key] = (spec.cwe.value, role_name)
    out: dict[str, dict[str, int]] = {}
    for key, projects in occurrences.items():
        cwe_value, role_name = kinds[key]
        stats = out.setdefault(
            cwe_value,
            {"unique_sources": 0, "unique_sinks": 0, "recurring_sources": 0, "recurring_sinks": 0},
        )
        prefix = "unique" if len(projects) == 1 else "recurring"
        stats[f"{prefix}_{role_name}"] += 1
    return out


def metrics_table(
    results: dict[str, tuple[list[Alert], ProjectLabel]], report: Optional[MetricsReport] = None
) -> str:
    """Fixed-width summary: one row per CWE plus an overall row."""
    report = report or compute_metrics(results)
    by_cwe: dict[str, dict[str, tuple[list[Alert], ProjectLabel]]] = {}
    for project_id, (alerts, label) in results.items():
        by_cwe.setdefault(label.cwe.value, {})[project_id] = (alerts, label)
    header = f"{'CWE':<10}{'#Proj':>7}{'#Detected':>11}{'AvgFDR':>9}{'AvgF1':>8}"
    rows = [header, "-" * len(header)]

    def fmt(value: Optional[float]) -> str:
        return "-" if value is None else f"{value:.4f}"

    for cwe_value in sorted(by_cwe):
        sub = compute_metrics(by_cwe[cwe_value])
        rows.append(
            f"{cwe_value:<10}{len(by_cwe[cwe_value]):>7}{sub.detected:>11}"
            f"{fmt(sub.avg_fdr):>9}{fmt(sub.avg_f1):>8}"
        )
    rows.append(
        f"{'overall':<10}{len(results):>7}{report.detected:>11}"
        f"{fmt(report.avg_fdr):>9}{fmt(report.avg_f1):>8}"
    )
    return "\n".join(rows)
