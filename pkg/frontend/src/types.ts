/** Shared types mirroring the triage server's JSON wire format. */

export type Triage = "Unreviewed" | "TruePositive" | "FalsePositive";

export interface SpecObj {
  node_type: string;
  package: string;
  class: string;
  method: string;
  signature: string[];
  position?: number;
  role: string;
  cwe: string;
}

export interface PathStep {
  node_id: number;
  file: string;
  line: number;
  column: number;
  function: string;
  code: string;
}

export interface VerdictObj {
  explanation: string;
  verdict: boolean;
  source_is_fp: boolean;
  sink_is_fp: boolean;
}

/** One alert as served by GET /api/alerts (read-only except `triage`). */
export interface AlertView {
  id: string;
  project: string;
  cwe: string;
  path: { nodes: number[]; source_spec: SpecObj; sink_spec: SpecObj };
  steps: PathStep[];
  verdict?: VerdictObj;
  triage: Triage;
  sink_key: string;
  source_key: string;
}

export interface GroupInfo {
  sink_key: string;
  alert_ids: string[];
}

export interface AlertsResponse {
  meta: Record<string, unknown>;
  alerts: AlertView[];
  groups: GroupInfo[];
}

export interface TriageCounts {
  unreviewed: number;
  tp: number;
  fp: number;
}
