/** DOM rendering: sink-key groups with per-alert triage controls. */

import type { TriageSession } from "./session.js";
import type { AlertView, Triage } from "./types.js";

export interface ViewHandlers {
  onTriage(id: string, triage: Triage): void;
  onMarkSimilar(id: string, by: "source" | "sink", triage: Triage): void;
  onExport(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function triageBadge(triage: Triage): HTMLElement {
  const short = triage === "TruePositive" ? "TP" : triage === "FalsePositive" ? "FP" : "—";
  return el("span", `badge badge-${triage.toLowerCase()}`, short);
}

function endpointText(alert: AlertView, which: "source" | "sink"): string {
  const spec = which === "source" ? alert.path.source_spec : alert.path.sink_spec;
  const step = which === "source" ? alert.steps[0] : alert.steps[alert.steps.length - 1];
  const api = `${spec.package}.${spec.class}.${spec.method}`;
  return `${api} @ ${step.file}:${step.line}`;
}

function alertRow(alert: AlertView, handlers: ViewHandlers): HTMLElement {
  const row = el("div", "alert-row");
  row.dataset.alertId = alert.id;
  row.dataset.triage = alert.triage;

  const head = el("div", "alert-head");
  head.append(
    triageBadge(alert.triage),
    el("code", "alert-id", alert.id),
    el("span", "alert-cwe", alert.cwe),
  );
  row.append(head);

  const flow = el("div", "alert-flow");
  flow.append(
    el("span", "endpoint source", `source: ${endpointText(alert, "source")}`),
    el("span", "arrow", " → "),
    el("span", "endpoint sink", `sink: ${endpointText(alert, "sink")}`),
    el("span", "steps", ` (${alert.steps.length} steps)`),
  );
  row.append(flow);

  const stepList = el("details", "path-steps");
  stepList.append(el("summary", undefined, "path"));
  for (const step of alert.steps) {
    stepList.append(el("div", "step", `${step.file}:${step.line}  ${step.code}`));
  }
  row.append(stepList);

  if (alert.verdict) {
    row.append(el("div", "verdict", `analysis: ${alert.verdict.explanation}`));
  }

  const controls = el("div", "controls");
  const buttons: Array<[string, () => void]> = [
    ["Is TP?", () => handlers.onTriage(alert.id, "TruePositive")],
    ["Is FP?", () => handlers.onTriage(alert.id, "FalsePositive")],
    ["Clear", () => handlers.onTriage(alert.id, "Unreviewed")],
    ["FP similar (source)", () => handlers.onMarkSimilar(alert.id, "source", "FalsePositive")],
    ["FP similar (sink)", () => handlers.onMarkSimilar(alert.id, "sink", "FalsePositive")],
  ];
  for (const [label, action] of buttons) {
    const button = el("button", "control", label);
    button.addEventListener("click", action);
    controls.append(button);
  }
  row.append(controls);
  return row;
}

export function render(root: HTMLElement, session: TriageSession, handlers: ViewHandlers): void {
  root.textContent = "";

  const header = el("header", "toolbar");
  const c = session.counts;
  header.append(
    el("h1", undefined, `Alert triage — ${String(session.meta["project"] ?? "")}`),
    el(
      "span",
      "counts",
      `${session.alerts.length} alerts · ${c.unreviewed} unreviewed · ${c.tp} TP · ${c.fp} FP`,
    ),
  );
  const exportButton = el("button", "control export", "Export JSON");
  exportButton.addEventListener("click", () => handlers.onExport());
  header.append(exportButton);
  root.append(header);

  if (session.alerts.length === 0) {
    root.append(el("p", "empty-state", "No alerts in this results directory."));
    return;
  }

  const alertsById = new Map(session.alerts.map((a) => [a.id, a]));
  for (const group of session.groups) {
    const section = el("section", "group");
    section.dataset.sinkKey = group.sink_key;
    section.append(
      el("h2", "group-head", `${group.sink_key} (${group.alert_ids.length})`),
    );
    for (const id of group.alert_ids) {
      const alert = alertsById.get(id);
      if (alert) section.append(alertRow(alert, handlers));
    }
    root.append(section);
  }
}

export function renderError(root: HTMLElement, message: string, onRetry: () => void): void {
  root.textContent = "";
  const banner = el("div", "error-banner");
  banner.append(el("span", undefined, message));
  const retry = el("button", "control", "Retry");
  retry.addEventListener("click", onRetry);
  banner.append(retry);
  root.append(banner);
}

export function downloadText(filename: string, text: string): void {
  const blob = new Blob([text], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = filename;
  link.click();
  URL.revokeObjectURL(url);
}
