// Application shell: wires the service client, spectrogram view,
// region editing, submission flow, mode table, and FRF overlay.

import { RunApi, RunSummary, FrfJson } from "./api.js";
import {
  DraftStore,
  RegionDraft,
  discardDraft,
  loadDraft,
  moveVertex,
  saveDraft,
  validateRegions,
} from "./regions.js";
import { SpectrogramView, VertexHit, hitTestVertex } from "./spectrogram.js";
import { SubmitQueue, diffSummaries, modeTable } from "./submit.js";

export interface AppElements {
  canvas: HTMLCanvasElement;
  banner: HTMLElement;
  modeTable: HTMLElement;
  diffPanel: HTMLElement;
  frfPanel: HTMLCanvasElement;
  submitButton: HTMLButtonElement;
  discardButton: HTMLButtonElement;
  validationBox: HTMLElement;
  driveSelect: HTMLSelectElement;
}

export class RegionStudio {
  private draft: RegionDraft = { regions: [], dirty: false, validation: null };
  private drive = 0;
  private runId = "run";
  private view: SpectrogramView | null = null;
  private queue: SubmitQueue | null = null;
  private dragging: VertexHit | null = null;
  private gridFreqs: number[] = [];
  private lastSummary: RunSummary | null = null;

  constructor(
    private readonly api: RunApi,
    private readonly el: AppElements,
    private readonly store: DraftStore,
  ) {}

  async start(): Promise<void> {
    try {
      const manifest = await this.api.manifest();
      this.runId = manifest.config_hash.slice(0, 12);
      this.el.banner.hidden = true;
    } catch {
      // offline: keep whatever cached state exists, read-only
      this.el.banner.hidden = false;
      this.el.banner.textContent =
        "service unreachable - showing cached results (read only)";
      this.el.submitButton.disabled = true;
      const cached = loadDraft(this.store, this.runId, this.drive);
      if (cached) this.draft = cached;
      return;
    }

    const listing = await this.api.spectrograms();
    this.el.driveSelect.innerHTML = listing
      .map((d) => `<option value="${d.drive}">drive ${d.drive}</option>`)
      .join("");
    this.el.driveSelect.onchange = () => {
      this.drive = Number(this.el.driveSelect.value);
      void this.loadDrive();
    };
    this.el.submitButton.onclick = () => void this.submit();
    this.el.discardButton.onclick = () => void this.discard();
    this.bindCanvas();
    await this.loadDrive();
    await this.refreshResults(await this.api.fused());
  }

  private async loadDrive(): Promise<void> {
    const meta = await this.api.spectrogramMeta(this.drive, 0);
    const tile = await this.api.spectrogramTile(this.drive, 0);
    this.gridFreqs = meta.freqs_hz;
    this.view = new SpectrogramView(this.el.canvas, meta, tile);
    this.queue = new SubmitQueue(this.api, {
      fMin: meta.f_min,
      fMax: meta.f_max,
      tMin: 0,
      tMax: (meta.n_time - 1) * meta.dt,
    });
    const cached = loadDraft(this.store, this.runId, this.drive);
    if (cached) {
      this.draft = cached;
    } else {
      this.draft = {
        regions: await this.api.regions(this.drive),
        dirty: false,
        validation: null,
      };
    }
    this.redraw();
  }

  private bindCanvas(): void {
    const canvas = this.el.canvas;
    canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.view?.zoom(ev.offsetX, ev.offsetY, ev.deltaY > 0 ? 1.15 : 0.87);
      this.redraw();
    });
    canvas.addEventListener("mousedown", (ev) => {
      if (!this.view) return;
      this.dragging = hitTestVertex(
        this.draft.regions,
        ev.offsetX,
        ev.offsetY,
        this.view.view,
        this.view.size,
      );
    });
    canvas.addEventListener("mousemove", (ev) => {
      if (!this.view) return;
      if (this.dragging) {
        const t = this.xToTime(ev.offsetX);
        const f = this.yToFreq(ev.offsetY);
        this.draft = moveVertex(
          this.draft,
          this.dragging.regionIndex,
          this.dragging.boundary,
          this.dragging.vertexIndex,
          t,
          f,
          this.gridFreqs,
        );
        this.persistDraft();
        this.redraw();
      } else if (ev.buttons === 1) {
        this.view.pan(ev.movementX, ev.movementY);
        this.redraw();
      }
    });
    canvas.addEventListener("mouseup", () => {
      this.dragging = null;
      this.validateDraft();
    });
  }

  private xToTime(x: number): number {
    const v = this.view!;
    return v.view.t0 + (x / v.size.width) * (v.view.t1 - v.view.t0);
  }

  private yToFreq(y: number): number {
    const v = this.view!;
    return v.view.f0 + ((v.size.height - y) / v.size.height) * (v.view.f1 - v.view.f0);
  }

  private persistDraft(): void {
    saveDraft(this.store, this.runId, this.drive, this.draft);
  }

  private validateDraft(): void {
    const meta = this.view;
    const bounds = meta
      ? { fMin: meta.view.f0, fMax: meta.view.f1, tMin: 0, tMax: 0 }
      : null;
    this.draft.validation = validateRegions(this.draft.regions, bounds);
    this.renderValidation();
  }

  private renderValidation(): void {
    const box = this.el.validationBox;
    if (this.draft.validation) {
      box.hidden = false;
      box.textContent =
        `${this.draft.validation.code}: ${this.draft.validation.message}`;
      this.el.submitButton.disabled = true;
    } else {
      box.hidden = true;
      this.el.submitButton.disabled = this.queue?.busy ?? false;
    }
  }

  private async submit(): Promise<void> {
    if (!this.queue) return;
    this.el.submitButton.disabled = true;
    try {
      const outcome = await this.queue.submit(this.drive, this.draft.regions);
      if (outcome.rejection) {
        this.draft.validation = outcome.rejection;
        this.renderValidation();
        return;
      }
      if (outcome.summary) {
        this.draft.dirty = false;
        discardDraft(this.store, this.runId, this.drive);
        await this.refreshResults(outcome.summary, outcome.previous);
      }
    } finally {
      this.el.submitButton.disabled = this.queue.busy;
    }
  }

  private async discard(): Promise<void> {
    discardDraft(this.store, this.runId, this.drive);
    this.draft = {
      regions: await this.api.regions(this.drive),
      dirty: false,
      validation: null,
    };
    this.redraw();
    this.renderValidation();
  }

  private async refreshResults(
    summary: RunSummary,
    previous: RunSummary | null = null,
  ): Promise<void> {
    const rows = modeTable(summary);
    this.el.modeTable.innerHTML =
      "<tr><th>mode</th><th>f (Hz)</th><th>zeta (%)</th>" +
      "<th>moduli</th><th>phases (deg)</th></tr>" +
      rows
        .map(
          (r) =>
            `<tr><td>${r.mode + 1}</td><td>${r.fHz.toFixed(4)}</td>` +
            `<td>${r.zetaPercent.toFixed(3)}</td>` +
            `<td>${r.moduli.map((m) => m.toFixed(3)).join(", ")}</td>` +
            `<td>${r.phasesDeg.map((p) => p.toFixed(1)).join(", ")}</td></tr>`,
        )
        .join("");

    const diff = diffSummaries(previous ?? this.lastSummary, summary);
    this.el.diffPanel.textContent =
      diff.eFinal.delta == null
        ? `E = ${diff.eFinal.current?.toFixed(4)}`
        : `E = ${diff.eFinal.current?.toFixed(4)} ` +
          `(previous ${diff.eFinal.previous?.toFixed(4)}, ` +
          `delta ${diff.eFinal.delta >= 0 ? "+" : ""}${diff.eFinal.delta.toFixed(4)})`;
    this.lastSummary = summary;
    await this.drawFrfOverlay();
  }

  private async drawFrfOverlay(): Promise<void> {
    const ctx = this.el.frfPanel.getContext("2d");
    if (!ctx) return;
    let measured: FrfJson;
    let recon: FrfJson;
    try {
      measured = await this.api.measuredFrf(this.drive);
      recon = await this.api.reconstructedFrf();
    } catch {
      return;
    }
    const { width, height } = this.el.frfPanel;
    ctx.clearRect(0, 0, width, height);
    const mags = (frf: FrfJson, out: number, inp: number) =>
      frf.values[out][inp].re.map((re, k) =>
        Math.hypot(re, frf.values[out][inp].im[k]),
      );
    const series = [
      { data: mags(measured, this.drive, 0), color: "#212121" },
      { data: mags(recon, this.drive, this.drive), color: "#9e9e9e" },
    ];
    const all = series.flatMap((s) => s.data).filter((v) => v > 0);
    const logMax = Math.log10(Math.max(...all));
    const logMin = logMax - 4;
    series.forEach(({ data, color }) => {
      ctx.strokeStyle = color;
      ctx.beginPath();
      data.forEach((v, k) => {
        const x = (k / (data.length - 1)) * width;
        const u = (Math.log10(Math.max(v, 10 ** logMin)) - logMin) /
          (logMax - logMin);
        const y = height - u * height;
        if (k === 0) ctx.moveTo(x, y);
        else ctx.lineTo(x, y);
      });
      ctx.stroke();
    });
  }

  private redraw(): void {
    this.view?.draw(this.draft.regions, this.dragging);
  }
}

export function mount(baseUrl: string, el: AppElements): RegionStudio {
  const studio = new RegionStudio(new RunApi(baseUrl), el, window.localStorage);
  void studio.start();
  return studio;
}
