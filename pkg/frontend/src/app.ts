/** DOM wiring for the console: heatmap canvas, drawing tool, query panel. */

import { ApiClient, ServiceError } from "./api.js";
import { drawFrame, fieldMax, displayedValueAt, type Field } from "./heatmap.js";
import { PolygonDraft } from "./polygon.js";
import { ConsoleSession, type HistoryEntry } from "./session.js";

const CELL_PX = 24;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function serviceBase(): string {
  const param = new URLSearchParams(window.location.search).get("service");
  return (param ?? window.location.origin).replace(/\/$/, "");
}

class App {
  session = new ConsoleSession(new ApiClient(serviceBase()));
  draft = new PolygonDraft();
  field: Field = "mean";
  lead = 0;
  vmax = 0;

  canvas = el<HTMLCanvasElement>("grid");
  status = el<HTMLDivElement>("status");
  hover = el<HTMLDivElement>("hover");
  probability = el<HTMLDivElement>("probability");
  historyList = el<HTMLUListElement>("history");

  async start(): Promise<void> {
    try {
      const patches = await this.session.loadPatches();
      const select = el<HTMLSelectElement>("patch");
      select.innerHTML = "";
      for (const p of patches) {
        const option = document.createElement("option");
        option.value = p.patch_id;
        option.textContent = `${p.patch_id} (D=${p.grid_size})`;
        select.appendChild(option);
      }
      select.onchange = () => {
        this.session.selectedPatch = select.value;
      };
      const first = patches[0];
      const startInput = el<HTMLInputElement>("start");
      if (first && !startInput.value) {
        // default: 12h past the series start so a full context exists
        const t = new Date(first.start + "Z");
        t.setUTCHours(t.getUTCHours() + 12);
        startInput.value = t.toISOString().slice(0, 19);
      }
      this.note(`connected: ${patches.length} patches`);
    } catch (err) {
      this.note(`service unreachable: ${(err as Error).message}`, true);
    }
    this.wire();
  }

  private wire(): void {
    el<HTMLButtonElement>("run-forecast").onclick = () => void this.runForecast();
    el<HTMLInputElement>("lead").oninput = (ev) => {
      this.lead = Number((ev.target as HTMLInputElement).value);
      this.redraw();
    };
    el<HTMLSelectElement>("field").onchange = (ev) => {
      this.field = (ev.target as HTMLSelectElement).value as Field;
      this.vmax = this.session.forecast ? fieldMax(this.session.forecast, this.field) : 0;
      this.redraw(); // toggle re-renders from the cached summary; no refetch
    };
    this.canvas.onclick = (ev) => {
      const rect = this.canvas.getBoundingClientRect();
      const x = (ev.clientX - rect.left) / CELL_PX;
      const y = (ev.clientY - rect.top) / CELL_PX;
      const origin = this.patchOrigin();
      this.draft.add(origin[1] + x, origin[0] + y);
      this.redraw();
    };
    this.canvas.onmousemove = (ev) => {
      const summary = this.session.forecast;
      if (!summary) return;
      const rect = this.canvas.getBoundingClientRect();
      const col = Math.floor((ev.clientX - rect.left) / CELL_PX);
      const row = Math.floor((ev.clientY - rect.top) / CELL_PX);
      const d = summary.mean[0].length;
      if (row < 0 || col < 0 || row >= d || col >= d) return;
      const value = displayedValueAt(summary, this.field, this.lead, row, col);
      this.hover.textContent = `cell (${row}, ${col}) ${this.field}: ${String(value)} ft`;
    };
    el<HTMLButtonElement>("undo-vertex").onclick = () => {
      this.draft.undo();
      this.redraw();
    };
    el<HTMLButtonElement>("clear-polygon").onclick = () => {
      this.draft.clear();
      this.redraw();
    };
    el<HTMLButtonElement>("query-area").onclick = () => void this.runQuery("area");
    el<HTMLButtonElement>("query-route").onclick = () => void this.runQuery("route");
  }

  private patchOrigin(): [number, number] {
    const patch = this.session.patches.find((p) => p.patch_id === this.session.selectedPatch);
    return patch ? patch.origin : [0, 0];
  }

  private note(message: string, isError = false): void {
    this.status.textContent = message;
    this.status.className = isError ? "error" : "";
  }

  async runForecast(): Promise<void> {
    const params = {
      start: el<HTMLInputElement>("start").value,
      horizon: Number(el<HTMLInputElement>("horizon").value),
      scenarios: Number(el<HTMLInputElement>("scenarios").value),
      seed: Number(el<HTMLInputElement>("seed").value),
    };
    this.note("forecasting...");
    try {
      const summary = await this.session.requestForecast(params);
      this.vmax = fieldMax(summary, this.field);
      const slider = el<HTMLInputElement>("lead");
      slider.max = String(summary.horizon - 1);
      this.lead = Math.min(this.lead, summary.horizon - 1);
      this.note(`ensemble ${summary.ensemble_id} (${summary.scenarios} scenarios)`);
      this.redraw();
    } catch (err) {
      this.note(this.describe(err), true);
    }
  }

  async runQuery(kind: "area" | "route"): Promise<void> {
    const spec = {
      kind,
      polygon: [...this.draft.vertices],
      threshold: Number(el<HTMLInputElement>("threshold").value),
      horizon: Number(el<HTMLInputElement>("query-horizon").value),
    };
    this.note(`${kind} query...`);
    try {
      const entry = await this.session.submitQuery(spec);
      this.showEntry(entry);
      this.note("query done");
    } catch (err) {
      this.note(this.describe(err), true);
    }
  }

  private describe(err: unknown): string {
    if (err instanceof ServiceError) return err.message;
    return (err as Error).message ?? String(err);
  }

  private showEntry(entry: HistoryEntry): void {
    const headline = entry.spec.kind === "route" ? "not flooded" : "exceedance";
    this.probability.innerHTML = "";
    const strong = document.createElement("strong");
    strong.textContent = `${headline}: ${String(entry.displayed)}`;
    this.probability.appendChild(strong);
    const detail = document.createElement("div");
    const parts = Object.entries(entry.result.per_patch_below).map(
      ([pid, p]) => `${pid}: below=${String(p)} (${entry.result.cells_per_patch[pid]} cells)`,
    );
    detail.textContent = parts.join("  ");
    this.probability.appendChild(detail);
    this.renderHistory();
  }

  private renderHistory(): void {
    this.historyList.innerHTML = "";
    for (let i = this.session.history.length - 1; i >= 0; i--) {
      const entry = this.session.history[i];
      const item = document.createElement("li");
      const text = document.createElement("span");
      text.textContent = `${entry.label}: ${String(entry.displayed)} `;
      item.appendChild(text);
      const replay = document.createElement("button");
      replay.textContent = "replay";
      replay.onclick = () => {
        void this.session.replay(entry).then((e) => this.showEntry(e));
      };
      item.appendChild(replay);
      this.historyList.appendChild(item);
    }
  }

  redraw(): void {
    const summary = this.session.forecast;
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);
    if (summary) {
      const d = summary.mean[0].length;
      this.canvas.width = d * CELL_PX;
      this.canvas.height = d * CELL_PX;
      drawFrame(ctx, summary, this.field, this.lead, this.vmax, CELL_PX);
      el<HTMLSpanElement>("lead-label").textContent = `+${this.lead + 1}h`;
    }
    // polygon overlay in patch-local pixels
    const origin = this.patchOrigin();
    const pts = this.draft.vertices.map(([x, y]) => [
      (x - origin[1]) * CELL_PX,
      (y - origin[0]) * CELL_PX,
    ]);
    if (pts.length) {
      ctx.strokeStyle = "#d63031";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(pts[0][0], pts[0][1]);
      for (const [x, y] of pts.slice(1)) ctx.lineTo(x, y);
      ctx.closePath();
      ctx.stroke();
      for (const [x, y] of pts) {
        ctx.fillStyle = "#d63031";
        ctx.fillRect(x - 3, y - 3, 6, 6);
      }
    }
  }
}

new App().start();
