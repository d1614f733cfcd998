/** Thin typed client for the triage HTTP API. */

import type { AlertsResponse, Triage } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(`HTTP ${status}: ${message}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = (await resp.json()) as { error?: string };
        if (body.error) detail = body.error;
      } catch {
        // keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return resp;
  }

  async alerts(): Promise<AlertsResponse> {
    const resp = await this.request("/api/alerts");
    return (await resp.json()) as AlertsResponse;
  }

  async setTriage(id: string, triage: Triage): Promise<{ id: string; triage: Triage }> {
    const resp = await this.request(`/api/alerts/${encodeURIComponent(id)}/triage`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ triage }),
    });
    return (await resp.json()) as { id: string; triage: Triage };
  }

  async markSimilar(
    id: string,
    by: "source" | "sink",
    triage: Triage,
  ): Promise<{ updated: string[]; triage: Triage }> {
    const resp = await this.request(`/api/alerts/${encodeURIComponent(id)}/mark-similar`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ by, triage }),
    });
    return (await resp.json()) as { updated: string[]; triage: Triage };
  }

  /** Raw export text; kept verbatim so the downloaded file matches the
   * server byte for byte. */
  async exportRaw(): Promise<string> {
    const resp = await this.request("/api/export");
    return await resp.text();
  }
}
