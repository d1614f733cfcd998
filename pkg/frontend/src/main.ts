import { ApiClient, ApiError } from "./api.js";
import {
  exportFiltered,
  loadSession,
  markSimilar,
  setTriage,
  type TriageSession,
} from "./session.js";
import { downloadText, render, renderError, type ViewHandlers } from "./view.js";

const root = document.getElementById("app");
if (root === null) throw new Error("missing #app container");

const api = new ApiClient("");
let session: TriageSession | null = null;

function redraw(): void {
  if (session) render(root as HTMLElement, session, handlers);
}

function showError(err: unknown): void {
  const message = err instanceof ApiError ? err.message : `connection error: ${String(err)}`;
  renderError(root as HTMLElement, message, () => void boot());
}

const handlers: ViewHandlers = {
  onTriage(id, triage) {
    if (!session) return;
    setTriage(session, api, id, triage).then(redraw, (err) => {
      redraw(); // state was rolled back
      console.error(err);
    });
    redraw(); // optimistic
  },
  onMarkSimilar(id, by, triage) {
    if (!session) return;
    markSimilar(session, api, id, by, triage).then(redraw, (err) => {
      redraw();
      console.error(err);
    });
    redraw();
  },
  onExport() {
    exportFiltered(api).then(
      (text) => downloadText("alerts-with-triage.json", text),
      showError,
    );
  },
};

async function boot(): Promise<void> {
  try {
    session = await loadSession(api);
    redraw();
  } catch (err) {
    showError(err);
  }
}

void boot();
