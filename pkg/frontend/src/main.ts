import { ApiError, Client } from "./api.js";
import { cursorFromFragment, fragmentForCursor, pollLoop } from "./poll.js";
import {
  renderControls,
  renderHistogram,
  renderProjection,
  renderSeedForm,
  renderStatusBar,
  renderTable,
} from "./render.js";
import {
  applyAgents,
  ingestPage,
  initialState,
  setAck,
  setAgentFilter,
  setControlBusy,
  setSeedError,
  setSort,
  setStale,
  toggleExpanded,
  type SortKey,
  type ViewState,
} from "./state.js";
import { templateError } from "./validate.js";
import type { ControlAck, HistogramPayload, ProjectionPayload } from "./types.js";

const AGENTS_REFRESH_MS = 2000;
const PANELS_REFRESH_MS = 5000;
const HISTOGRAM_BINS = 20;

const client = new Client("");
let state: ViewState = initialState(cursorFromFragment(location.hash));
let histogram: HistogramPayload | null = null;
let projection: ProjectionPayload | null = null;

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

function update(next: ViewState): void {
  state = next;
  draw();
}

function draw(): void {
  el("status").innerHTML = renderStatusBar(state);
  el("table").innerHTML = renderTable(state);
  el("controls").innerHTML = renderControls(state);
  el("seed").innerHTML = renderSeedForm(state);
  el("histogram").innerHTML = histogram
    ? renderHistogram(histogram)
    : `<p class="empty">loading…</p>`;
  el("projection").innerHTML = projection
    ? renderProjection(projection)
    : `<p class="empty">loading…</p>`;
}

// ── background refresh ──────────────────────────────────────────────

async function refreshAgents(): Promise<void> {
  try {
    update(applyAgents(state, await client.getAgents()));
  } catch {
    /* the poll loop owns the stale banner */
  }
}

async function refreshPanels(): Promise<void> {
  try {
    histogram = await client.getHistogram(state.agentFilter, HISTOGRAM_BINS);
    projection = await client.getProjection();
    draw();
  } catch {
    /* ditto */
  }
}

// ── control submissions, one at a time ──────────────────────────────

let controlChain: Promise<void> = Promise.resolve();

function submitControl(run: () => Promise<ControlAck>): void {
  controlChain = controlChain.then(async () => {
    update(setControlBusy(state, true));
    try {
      const ack = await run();
      update(setAck(setControlBusy(state, false), ack));
      await refreshAgents(); // button states flip only after the server ack
    } catch (error) {
      const message = error instanceof ApiError ? error.message : "request failed";
      update(setSeedError(setControlBusy(state, false), message));
    }
  });
}

// ── event delegation ────────────────────────────────────────────────

function wireEvents(): void {
  el("table").addEventListener("click", (event) => {
    const target = event.target as HTMLElement;
    const sortKey = target.closest("th[data-sort]")?.getAttribute("data-sort");
    if (sortKey) {
      update(setSort(state, sortKey as SortKey));
      return;
    }
    const promptId = target.closest("tr[data-toggle]")?.getAttribute("data-toggle");
    if (promptId) {
      update(toggleExpanded(state, promptId));
    }
  });

  el("table").addEventListener("change", (event) => {
    const target = event.target as HTMLSelectElement;
    if (target.id === "agent-filter") {
      update(setAgentFilter(state, target.value));
      void refreshPanels();
    }
  });

  el("controls").addEventListener("click", (event) => {
    const button = (event.target as HTMLElement).closest("button[data-action]");
    if (!button || state.controlBusy) return;
    const action = button.getAttribute("data-action")!;
    const agentId = button.getAttribute("data-agent")!;
    if (action === "pause") {
      submitControl(() => client.pause(agentId));
    } else if (action === "resume") {
      submitControl(() => client.resume(agentId));
    } else if (action === "params") {
      const card = button.closest(".agent-card")!;
      const temp = (card.querySelector(".param-temperature") as HTMLInputElement).value;
      const eps = (card.querySelector(".param-epsilon") as HTMLInputElement).value;
      const values: { temperature?: number; epsilon?: number } = {};
      if (temp !== "") values.temperature = Number(temp);
      if (eps !== "") values.epsilon = Number(eps);
      submitControl(() => client.params(agentId, values));
    }
  });

  el("seed").addEventListener("submit", (event) => {
    event.preventDefault();
    const box = document.getElementById("seed-text") as HTMLTextAreaElement;
    const text = box.value;
    const problem = templateError(text);
    if (problem) {
      update(setSeedError(state, problem)); // rejected locally, nothing sent
      return;
    }
    update(setSeedError(state, null));
    submitControl(() => client.seed(text));
  });
}

// ── boot ────────────────────────────────────────────────────────────

function boot(): void {
  wireEvents();
  draw();
  void refreshAgents();
  void refreshPanels();
  setInterval(refreshAgents, AGENTS_REFRESH_MS);
  setInterval(refreshPanels, PANELS_REFRESH_MS);

  const abort = new AbortController();
  void pollLoop(client, state.cursor, {
    onPage: (page) => update(ingestPage(state, page)),
    onStale: (stale) => update(setStale(state, stale)),
    saveCursor: (cursor) => history.replaceState(null, "", fragmentForCursor(cursor)),
    sleep: (ms) => new Promise((resolve) => setTimeout(resolve, ms)),
  }, abort.signal);
}

document.addEventListener("DOMContentLoaded", boot);
