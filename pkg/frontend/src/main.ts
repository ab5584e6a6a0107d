/**
 * DOM wiring for the annotation UI: slice canvas with the red region frame
 * and optional entropy overlay, click-to-point labeling, the "b" key for
 * background tags, budget/status readouts, and the train button with
 * polling and curve refresh.
 */

import { Api, QueueEntry } from "./api.js";
import { SessionState } from "./state.js";
import { drawCurve, parseCurveCsv } from "./chart.js";
import {
  ViewTransform,
  displayToSlice,
  rectContains,
  rectToDisplay,
  SlicePoint,
} from "./transform.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

interface UiRefs {
  canvas: HTMLCanvasElement;
  chart: HTMLCanvasElement;
  budget: HTMLElement;
  cycle: HTMLElement;
  dice: HTMLElement;
  banner: HTMLElement;
  error: HTMLElement;
  trainBtn: HTMLButtonElement;
  backgroundBtn: HTMLButtonElement;
  submitBtn: HTMLButtonElement;
  heatmapToggle: HTMLInputElement;
}

export class AnnotationApp {
  private state: SessionState;
  private transform: ViewTransform = { scale: 6, offsetX: 0, offsetY: 0 };
  private sliceImage: HTMLImageElement | null = null;
  private entropyImage: HTMLImageElement | null = null;
  private stagedPoints: SlicePoint[] = [];

  constructor(
    private api: Api,
    sessionId: string,
    private refs: UiRefs,
  ) {
    this.state = new SessionState(api, sessionId);
  }

  async start(): Promise<void> {
    this.refs.canvas.addEventListener("click", (ev) => this.onCanvasClick(ev));
    this.refs.backgroundBtn.addEventListener("click", () => void this.submitBackground());
    this.refs.submitBtn.addEventListener("click", () => void this.submitPoints());
    this.refs.trainBtn.addEventListener("click", () => void this.train());
    this.refs.heatmapToggle.addEventListener("change", () => this.render());
    document.addEventListener("keydown", (ev) => {
      if (ev.key === "b") void this.submitBackground();
    });
    await this.state.refreshStatus();
    await this.state.refreshQueue();
    await this.loadEntryImages();
    await this.refreshCurve();
    this.updateReadouts();
    this.render();
  }

  get entry(): QueueEntry | null {
    return this.state.current;
  }

  private async loadEntryImages(): Promise<void> {
    const entry = this.entry;
    this.sliceImage = null;
    this.entropyImage = null;
    this.stagedPoints = [];
    if (!entry) return;
    try {
      this.sliceImage = await loadPng(entry.slice_png);
      if (entry.entropy_png) this.entropyImage = await loadPng(entry.entropy_png);
    } catch {
      // decode failure: surface an error card and advance past the entry
      this.refs.error.textContent = `could not decode images for ${entry.image_id}`;
      this.state.queue = this.state.queue.slice(1);
      await this.loadEntryImages();
    }
  }

  private onCanvasClick(ev: MouseEvent): void {
    const entry = this.entry;
    if (!entry) return;
    const bounds = this.refs.canvas.getBoundingClientRect();
    const p = displayToSlice(this.transform, ev.clientX - bounds.left, ev.clientY - bounds.top);
    if (!rectContains(entry.rect, p)) {
      this.flashOutsideCue();
      return; // no network request for clicks outside the rectangle
    }
    this.stagedPoints.push(p);
    this.render();
  }

  private flashOutsideCue(): void {
    this.refs.canvas.style.outline = "2px solid #e67e22";
    setTimeout(() => (this.refs.canvas.style.outline = ""), 150);
  }

  async submitPoints(): Promise<void> {
    if (!this.stagedPoints.length) return;
    const points = this.stagedPoints.map((p) => [p.row, p.col] as [number, number]);
    const result = await this.state.submit({ points });
    await this.afterSubmit(result.ok);
  }

  async submitBackground(): Promise<void> {
    const result = await this.state.submit({ background: true });
    await this.afterSubmit(result.ok);
  }

  private async afterSubmit(ok: boolean): Promise<void> {
    if (ok) {
      await this.loadEntryImages();
    }
    this.updateReadouts();
    this.render();
  }

  async train(): Promise<void> {
    this.refs.trainBtn.disabled = true;
    this.refs.banner.textContent = "training...";
    const started = await this.state.train();
    if (!started.ok) {
      this.refs.banner.textContent = "";
      this.refs.error.textContent = started.error ?? "train rejected";
      this.refs.trainBtn.disabled = false;
      return;
    }
    const status = await this.state.pollUntilIdle();
    this.refs.trainBtn.disabled = false;
    this.refs.banner.textContent = status.job.state === "failed" ? `training failed: ${status.job.reason}` : "";
    await this.state.refreshQueue();
    await this.loadEntryImages();
    await this.refreshCurve();
    this.updateReadouts();
    this.render();
  }

  private async refreshCurve(): Promise<void> {
    const csv = await this.api.getCurveCsv(this.state.sessionId);
    drawCurve(this.refs.chart, parseCurveCsv(csv));
  }

  private updateReadouts(): void {
    this.refs.budget.textContent = `${this.state.budgetSeconds.toFixed(0)} s`;
    const st = this.state.status;
    this.refs.cycle.textContent = st ? String(st.cycle) : "-";
    this.refs.dice.textContent = st && st.val_dice != null ? st.val_dice.toFixed(3) : "-";
    this.refs.error.textContent = this.state.lastError ?? "";
  }

  render(): void {
    const ctx = this.refs.canvas.getContext("2d");
    const entry = this.entry;
    if (!ctx) return;
    ctx.clearRect(0, 0, this.refs.canvas.width, this.refs.canvas.height);
    if (!entry || !this.sliceImage) {
      ctx.fillStyle = "#555";
      ctx.fillText(this.state.exhausted ? "all regions labeled" : "queue empty - run training", 12, 20);
      return;
    }
    const t = this.transform;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(
      this.sliceImage,
      t.offsetX,
      t.offsetY,
      this.sliceImage.width * t.scale,
      this.sliceImage.height * t.scale,
    );
    if (this.refs.heatmapToggle.checked && this.entropyImage) {
      ctx.globalAlpha = 0.45;
      ctx.drawImage(
        this.entropyImage,
        t.offsetX,
        t.offsetY,
        this.entropyImage.width * t.scale,
        this.entropyImage.height * t.scale,
      );
      ctx.globalAlpha = 1.0;
    }
    const frame = rectToDisplay(t, entry.rect);
    ctx.strokeStyle = "#e74c3c";
    ctx.lineWidth = 2;
    ctx.strokeRect(frame.x, frame.y, frame.width, frame.height);
    ctx.fillStyle = "#2ecc71";
    for (const p of this.stagedPoints) {
      ctx.beginPath();
      ctx.arc((p.col + 0.5) * t.scale + t.offsetX, (p.row + 0.5) * t.scale + t.offsetY, 4, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}

function loadPng(base64: string): Promise<HTMLImageElement> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve(img);
    img.onerror = () => reject(new Error("image decode failed"));
    img.src = `data:image/png;base64,${base64}`;
  });
}

export async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const baseUrl = params.get("service") ?? "http://127.0.0.1:8008";
  const api = new Api(baseUrl);
  let sessionId = params.get("session");
  if (!sessionId) {
    const manifest = params.get("manifest");
    if (!manifest) {
      $("error").textContent = "pass ?session=<id> or ?manifest=<path> in the URL";
      return;
    }
    const created = await api.createSession(manifest, {});
    sessionId = created.id;
  }
  const app = new AnnotationApp(api, sessionId, {
    canvas: $("slice-canvas"),
    chart: $("curve-chart"),
    budget: $("budget"),
    cycle: $("cycle"),
    dice: $("dice"),
    banner: $("banner"),
    error: $("error"),
    trainBtn: $("train-btn"),
    backgroundBtn: $("background-btn"),
    submitBtn: $("submit-btn"),
    heatmapToggle: $("heatmap-toggle"),
  });
  await app.start();
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("slice-canvas")) {
  void boot();
}
