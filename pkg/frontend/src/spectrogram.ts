// Spectrogram heatmap: log-magnitude color scale, coi shading, zoom
// and pan, and draggable region-boundary overlays.
//
// Coordinate math lives in pure helpers so the rendering layer stays a
// thin canvas pass.

import type { SpectrogramMeta, Tile } from "./api.js";
import type { Region } from "./regions.js";

export interface Viewport {
  t0: number;
  t1: number;
  f0: number;
  f1: number;
}

export interface CanvasSize {
  width: number;
  height: number;
}

export function fullViewport(meta: SpectrogramMeta): Viewport {
  return {
    t0: 0,
    t1: (meta.n_time - 1) * meta.dt,
    f0: meta.f_min,
    f1: meta.f_max,
  };
}

export function timeToX(t: number, view: Viewport, size: CanvasSize): number {
  return ((t - view.t0) / (view.t1 - view.t0)) * size.width;
}

export function freqToY(f: number, view: Viewport, size: CanvasSize): number {
  // canvas y grows downward; high frequencies at the top
  return size.height - ((f - view.f0) / (view.f1 - view.f0)) * size.height;
}

export function xToTime(x: number, view: Viewport, size: CanvasSize): number {
  return view.t0 + (x / size.width) * (view.t1 - view.t0);
}

export function yToFreq(y: number, view: Viewport, size: CanvasSize): number {
  return view.f0 + ((size.height - y) / size.height) * (view.f1 - view.f0);
}

/** Zoom about an anchor point, clamped to the data extent. */
export function zoomViewport(
  view: Viewport,
  full: Viewport,
  anchorT: number,
  anchorF: number,
  factor: number,
): Viewport {
  const clamp = (v: number, lo: number, hi: number) =>
    Math.min(hi, Math.max(lo, v));
  const span = (a: number, b: number) => b - a;
  let t0 = anchorT - (anchorT - view.t0) * factor;
  let t1 = anchorT + (view.t1 - anchorT) * factor;
  let f0 = anchorF - (anchorF - view.f0) * factor;
  let f1 = anchorF + (view.f1 - anchorF) * factor;
  t0 = clamp(t0, full.t0, full.t1);
  t1 = clamp(t1, full.t0, full.t1);
  f0 = clamp(f0, full.f0, full.f1);
  f1 = clamp(f1, full.f0, full.f1);
  if (span(t0, t1) <= 0 || span(f0, f1) <= 0) return view;
  return { t0, t1, f0, f1 };
}

export function panViewport(
  view: Viewport,
  full: Viewport,
  dT: number,
  dF: number,
): Viewport {
  const widthT = view.t1 - view.t0;
  const widthF = view.f1 - view.f0;
  let t0 = view.t0 + dT;
  let f0 = view.f0 + dF;
  t0 = Math.min(Math.max(t0, full.t0), full.t1 - widthT);
  f0 = Math.min(Math.max(f0, full.f0), full.f1 - widthF);
  return { t0, t1: t0 + widthT, f0, f1: f0 + widthF };
}

/** Log-magnitude color index in [0, 1] with a fixed dynamic range. */
export function logScale(value: number, peak: number, rangeDb = 60): number {
  if (!(peak > 0) || !(value > 0)) return 0;
  const db = 20 * Math.log10(value / peak);
  return Math.min(1, Math.max(0, 1 + db / rangeDb));
}

/** Simple blue-to-yellow ramp; returns [r, g, b]. */
export function colormap(u: number): [number, number, number] {
  const v = Math.min(1, Math.max(0, u));
  return [
    Math.round(255 * Math.min(1, 1.6 * v)),
    Math.round(255 * Math.pow(v, 1.3)),
    Math.round(255 * Math.max(0, 0.6 - 0.5 * v) + 100 * v * (1 - v)),
  ];
}

export interface VertexHit {
  regionIndex: number;
  boundary: 0 | 1;
  vertexIndex: number;
}

/** Find the boundary vertex within `radiusPx` of a canvas point. */
export function hitTestVertex(
  regions: Region[],
  xPx: number,
  yPx: number,
  view: Viewport,
  size: CanvasSize,
  radiusPx = 8,
): VertexHit | null {
  let best: VertexHit | null = null;
  let bestDist = radiusPx;
  regions.forEach((region, regionIndex) => {
    region.polyline.forEach((poly, boundary) => {
      poly.forEach(([t, f], vertexIndex) => {
        const dx = timeToX(t, view, size) - xPx;
        const dy = freqToY(f, view, size) - yPx;
        const d = Math.hypot(dx, dy);
        if (d <= bestDist) {
          bestDist = d;
          best = { regionIndex, boundary: boundary as 0 | 1, vertexIndex };
        }
      });
    });
  });
  return best;
}

export class SpectrogramView {
  view: Viewport;
  private readonly full: Viewport;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly meta: SpectrogramMeta,
    private tile: Tile,
  ) {
    this.full = fullViewport(meta);
    this.view = { ...this.full };
  }

  get size(): CanvasSize {
    return { width: this.canvas.width, height: this.canvas.height };
  }

  setTile(tile: Tile): void {
    this.tile = tile;
  }

  zoom(anchorX: number, anchorY: number, factor: number): void {
    this.view = zoomViewport(
      this.view,
      this.full,
      xToTime(anchorX, this.view, this.size),
      yToFreq(anchorY, this.view, this.size),
      factor,
    );
  }

  pan(dxPx: number, dyPx: number): void {
    const size = this.size;
    const dT = (-dxPx / size.width) * (this.view.t1 - this.view.t0);
    const dF = (dyPx / size.height) * (this.view.f1 - this.view.f0);
    this.view = panViewport(this.view, this.full, dT, dF);
  }

  draw(regions: Region[], highlight: VertexHit | null = null): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.size;
    const image = ctx.createImageData(width, height);
    const { rows, cols, values } = this.tile;
    const peak = values.reduce((m, v) => (v > m ? v : m), 0);
    const tSpan = this.tile.tRange[1] - this.tile.tRange[0] || 1;
    const fSpan = this.tile.fRange[1] - this.tile.fRange[0] || 1;
    for (let y = 0; y < height; y++) {
      const f = yToFreq(y + 0.5, this.view, this.size);
      const row = Math.min(
        rows - 1,
        Math.max(0, Math.round(((f - this.tile.fRange[0]) / fSpan) * (rows - 1))),
      );
      for (let x = 0; x < width; x++) {
        const t = xToTime(x + 0.5, this.view, this.size);
        const col = Math.min(
          cols - 1,
          Math.max(
            0,
            Math.round(((t - this.tile.tRange[0]) / tSpan) * (cols - 1)),
          ),
        );
        const [r, g, b] = colormap(logScale(values[row * cols + col], peak));
        const k = 4 * (y * width + x);
        image.data[k] = r;
        image.data[k + 1] = g;
        image.data[k + 2] = b;
        image.data[k + 3] = 255;
      }
    }
    ctx.putImageData(image, 0, 0);
    this.shadeCoi(ctx);
    this.drawRegions(ctx, regions, highlight);
  }

  private shadeCoi(ctx: CanvasRenderingContext2D): void {
    // hatch the edge-dominated area below the cone-of-influence curve
    const { width, height } = this.size;
    ctx.save();
    ctx.fillStyle = "rgba(0, 0, 0, 0.35)";
    const n = this.meta.coi_hz.length;
    for (let x = 0; x < width; x++) {
      const t = xToTime(x + 0.5, this.view, this.size);
      const idx = Math.min(
        n - 1,
        Math.max(0, Math.round(t / this.meta.dt)),
      );
      const yCoi = freqToY(this.meta.coi_hz[idx], this.view, this.size);
      if (yCoi < height) {
        ctx.fillRect(x, Math.max(0, yCoi), 1, height - Math.max(0, yCoi));
      }
    }
    ctx.restore();
  }

  private drawRegions(
    ctx: CanvasRenderingContext2D,
    regions: Region[],
    highlight: VertexHit | null,
  ): void {
    const palette = ["#ff5252", "#40c4ff", "#ffd740", "#69f0ae", "#e040fb"];
    regions.forEach((region, regionIndex) => {
      ctx.strokeStyle = palette[regionIndex % palette.length];
      ctx.lineWidth = 1.5;
      region.polyline.forEach((poly, boundary) => {
        ctx.beginPath();
        poly.forEach(([t, f], i) => {
          const x = timeToX(t, this.view, this.size);
          const y = freqToY(f, this.view, this.size);
          if (i === 0) ctx.moveTo(x, y);
          else ctx.lineTo(x, y);
        });
        ctx.stroke();
        poly.forEach(([t, f], vertexIndex) => {
          const x = timeToX(t, this.view, this.size);
          const y = freqToY(f, this.view, this.size);
          const hot =
            highlight &&
            highlight.regionIndex === regionIndex &&
            highlight.boundary === boundary &&
            highlight.vertexIndex === vertexIndex;
          ctx.fillStyle = hot ? "#ffffff" : ctx.strokeStyle as string;
          ctx.beginPath();
          ctx.arc(x, y, hot ? 5 : 3.5, 0, 2 * Math.PI);
          ctx.fill();
        });
      });
    });
  }
}
