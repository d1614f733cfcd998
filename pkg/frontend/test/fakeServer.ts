/** In-memory implementation of the triage API contract, used as a fetch
 * stand-in. Key derivation and response shapes mirror the real server so the
 * captured fixture can be checked for parity. */

import type { AlertView, SpecObj, Triage } from "../src/types.js";

type RawAlert = Omit<AlertView, "sink_key" | "source_key"> &
  Partial<Pick<AlertView, "sink_key" | "source_key">>;

export function specKey(spec: SpecObj): string {
  const sig = spec.signature.join(",");
  const pos = spec.position === undefined || spec.position === null ? "ret" : String(spec.position);
  return `${spec.package}.${spec.class}.${spec.method}(${sig})@${pos}`;
}

export function sourceKeyOf(alert: RawAlert): string {
  const step = alert.steps[0];
  return `${specKey(alert.path.source_spec)}|${step.file}:${step.line}`;
}

export function sinkKeyOf(alert: RawAlert): string {
  const step = alert.steps[alert.steps.length - 1];
  return `${specKey(alert.path.sink_spec)}|${step.file}:${step.line}`;
}

function canonicalize(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(canonicalize);
  if (value !== null && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as Record<string, unknown>).sort()) {
      out[key] = canonicalize((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}

function stableStringify(value: unknown): string {
  return JSON.stringify(canonicalize(value), null, 2) + "\n";
}

const TRIAGE_VALUES = new Set(["Unreviewed", "TruePositive", "FalsePositive"]);

export class FakeServer {
  readonly alerts: RawAlert[];
  readonly meta: Record<string, unknown>;
  failNext = false;

  constructor(payload: { meta: Record<string, unknown>; alerts: RawAlert[] }) {
    this.meta = payload.meta;
    // deep-copy and strip any listing annotations
    this.alerts = payload.alerts.map((a) => {
      const copy = JSON.parse(JSON.stringify(a)) as RawAlert;
      delete copy.sink_key;
      delete copy.source_key;
      return copy;
    });
  }

  listing(): { meta: Record<string, unknown>; alerts: AlertView[]; groups: { sink_key: string; alert_ids: string[] }[] } {
    const groups = new Map<string, string[]>();
    const annotated: AlertView[] = [];
    for (const alert of this.alerts) {
      const key = sinkKeyOf(alert);
      if (!groups.has(key)) groups.set(key, []);
      groups.get(key)!.push(alert.id);
      annotated.push({ ...(alert as AlertView), sink_key: key, source_key: sourceKeyOf(alert) });
    }
    return {
      meta: this.meta,
      alerts: annotated,
      groups: [...groups.keys()].sort().map((k) => ({ sink_key: k, alert_ids: groups.get(k)! })),
    };
  }

  exportText(): string {
    return stableStringify({ meta: this.meta, alerts: this.alerts });
  }

  private find(id: string): RawAlert | undefined {
    return this.alerts.find((a) => a.id === id);
  }

  /** fetch-compatible entry point */
  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    if (this.failNext) {
      this.failNext = false;
      return json({ error: "injected failure" }, 500);
    }
    const url = new URL(input, "http://fake.local");
    const method = init?.method ?? "GET";
    if (method === "GET" && url.pathname === "/api/alerts") return json(this.listing());
    if (method === "GET" && url.pathname === "/api/export") {
      return new Response(this.exportText(), {
        status: 200,
        headers: { "Content-Type": "application/json; charset=utf-8" },
      });
    }
    const match = url.pathname.match(/^\/api\/alerts\/([^/]+)\/(triage|mark-similar)$/);
    if (method === "POST" && match) {
      const [, id, action] = match;
      let body: { triage?: string; by?: string };
      try {
        body = JSON.parse(String(init?.body ?? "{}")) as { triage?: string; by?: string };
      } catch {
        return json({ error: "malformed JSON body" }, 400);
      }
      if (!body.triage || !TRIAGE_VALUES.has(body.triage)) {
        return json({ error: "bad triage value" }, 400);
      }
      const anchor = this.find(id);
      if (anchor === undefined) return json({ error: `unknown alert ${id}` }, 404);
      if (action === "triage") {
        anchor.triage = body.triage as Triage;
        return json({ id, triage: body.triage });
      }
      if (body.by !== "source" && body.by !== "sink") {
        return json({ error: "by must be 'source' or 'sink'" }, 400);
      }
      const keyFn = body.by === "source" ? sourceKeyOf : sinkKeyOf;
      const anchorKey = keyFn(anchor);
      const updated: string[] = [];
      for (const alert of this.alerts) {
        if (keyFn(alert) === anchorKey) {
          alert.triage = body.triage as Triage;
          updated.push(alert.id);
        }
      }
      return json({ updated, triage: body.triage });
    }
    return json({ error: "unknown endpoint" }, 404);
  };
}

function json(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "Content-Type": "application/json; charset=utf-8" },
  });
}
