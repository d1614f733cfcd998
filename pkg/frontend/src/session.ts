/** Triage session state: a pure projection of the server's alert list,
 * mutated optimistically and reconciled (or rolled back) per response. */

import type { ApiClient } from "./api.js";
import type { AlertView, AlertsResponse, GroupInfo, Triage, TriageCounts } from "./types.js";

export interface TriageSession {
  meta: Record<string, unknown>;
  alerts: AlertView[];
  /** sink-key partition, exactly as the server reported it */
  groups: GroupInfo[];
  counts: TriageCounts;
}

export function countTriage(alerts: readonly AlertView[]): TriageCounts {
  const counts: TriageCounts = { unreviewed: 0, tp: 0, fp: 0 };
  for (const alert of alerts) {
    if (alert.triage === "TruePositive") counts.tp += 1;
    else if (alert.triage === "FalsePositive") counts.fp += 1;
    else counts.unreviewed += 1;
  }
  return counts;
}

export function buildSession(resp: AlertsResponse): TriageSession {
  return {
    meta: resp.meta,
    alerts: resp.alerts,
    groups: resp.groups,
    counts: countTriage(resp.alerts),
  };
}

export async function loadSession(api: ApiClient): Promise<TriageSession> {
  return buildSession(await api.alerts());
}

function byId(session: TriageSession, id: string): AlertView | undefined {
  return session.alerts.find((a) => a.id === id);
}

function refresh(session: TriageSession): void {
  session.counts = countTriage(session.alerts);
}

/** Optimistically set one alert's triage; rolls back if the server refuses. */
export async function setTriage(
  session: TriageSession,
  api: ApiClient,
  id: string,
  triage: Triage,
): Promise<TriageSession> {
  const alert = byId(session, id);
  if (alert === undefined) throw new Error(`unknown alert ${id}`);
  const previous = alert.triage;
  alert.triage = triage;
  refresh(session);
  try {
    const ack = await api.setTriage(id, triage);
    alert.triage = ack.triage; // reconcile with the server's answer
  } catch (err) {
    alert.triage = previous;
    throw err;
  } finally {
    refresh(session);
  }
  return session;
}

/** Optimistically apply a triage to every alert sharing the anchor's source
 * or sink, then reconcile with the server's authoritative updated-id list. */
export async function markSimilar(
  session: TriageSession,
  api: ApiClient,
  id: string,
  by: "source" | "sink",
  triage: Triage,
): Promise<{ session: TriageSession; updated: string[] }> {
  const anchor = byId(session, id);
  if (anchor === undefined) throw new Error(`unknown alert ${id}`);
  const key = by === "source" ? anchor.source_key : anchor.sink_key;
  const snapshot = new Map<string, Triage>();
  for (const alert of session.alerts) {
    const alertKey = by === "source" ? alert.source_key : alert.sink_key;
    if (alertKey === key) {
      snapshot.set(alert.id, alert.triage);
      alert.triage = triage;
    }
  }
  refresh(session);
  try {
    const ack = await api.markSimilar(id, by, triage);
    // the server owns similarity: apply exactly its list
    for (const [alertId, previous] of snapshot) {
      if (!ack.updated.includes(alertId)) {
        const alert = byId(session, alertId);
        if (alert) alert.triage = previous;
      }
    }
    for (const alertId of ack.updated) {
      const alert = byId(session, alertId);
      if (alert) alert.triage = ack.triage;
    }
    refresh(session);
    return { session, updated: ack.updated };
  } catch (err) {
    for (const [alertId, previous] of snapshot) {
      const alert = byId(session, alertId);
      if (alert) alert.triage = previous;
    }
    refresh(session);
    throw err;
  }
}

/** The export is the server's bytes, untouched. */
export async function exportFiltered(api: ApiClient): Promise<string> {
  return api.exportRaw();
}

/** Group membership as rendered, for comparison against the server's view. */
export function groupPartition(session: TriageSession): Map<string, string[]> {
  const partition = new Map<string, string[]>();
  for (const group of session.groups) {
    partition.set(group.sink_key, [...group.alert_ids]);
  }
  return partition;
}
