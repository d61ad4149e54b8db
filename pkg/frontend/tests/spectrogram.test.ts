import { describe, expect, it } from "vitest";

import type { SpectrogramMeta } from "../src/api.js";
import {
  colormap,
  freqToY,
  fullViewport,
  hitTestVertex,
  logScale,
  panViewport,
  timeToX,
  xToTime,
  yToFreq,
  zoomViewport,
} from "../src/spectrogram.js";

const meta: SpectrogramMeta = {
  n_freq: 100,
  n_time: 501,
  dt: 0.02,
  omega_c: 60,
  f_min: 1,
  f_max: 6,
  freqs_hz: [],
  coi_hz: [],
  coi_min_hz: 0.5,
  label: "",
};

const size = { width: 800, height: 400 };

describe("viewport transforms", () => {
  it("round-trips pixels and data coordinates", () => {
    const view = fullViewport(meta);
    expect(xToTime(timeToX(3.7, view, size), view, size)).toBeCloseTo(3.7);
    expect(yToFreq(freqToY(4.2, view, size), view, size)).toBeCloseTo(4.2);
  });

  it("puts high frequencies at the top of the canvas", () => {
    const view = fullViewport(meta);
    expect(freqToY(meta.f_max, view, size)).toBe(0);
    expect(freqToY(meta.f_min, view, size)).toBe(size.height);
  });

  it("zooms about the anchor and clamps to the data", () => {
    const full = fullViewport(meta);
    const zoomed = zoomViewport(full, full, 5.0, 4.0, 0.5);
    expect(zoomed.t1 - zoomed.t0).toBeCloseTo((full.t1 - full.t0) / 2);
    expect(zoomed.f0).toBeGreaterThanOrEqual(full.f0);
    expect(zoomed.f1).toBeLessThanOrEqual(full.f1);
    const zoomedOut = zoomViewport(zoomed, full, 5.0, 4.0, 10);
    expect(zoomedOut.t0).toBeGreaterThanOrEqual(full.t0);
    expect(zoomedOut.t1).toBeLessThanOrEqual(full.t1);
  });

  it("pans without leaving the data extent", () => {
    const full = fullViewport(meta);
    const zoomed = zoomViewport(full, full, 5.0, 3.5, 0.5);
    const panned = panViewport(zoomed, full, -1000.0, 0);
    expect(panned.t0).toBe(full.t0);
    expect(panned.t1 - panned.t0).toBeCloseTo(zoomed.t1 - zoomed.t0);
  });
});

describe("color scale", () => {
  it("is monotone in magnitude with a fixed dynamic range", () => {
    expect(logScale(1.0, 1.0)).toBe(1);
    expect(logScale(0.0, 1.0)).toBe(0);
    const mid = logScale(0.01, 1.0); // -40 dB inside a 60 dB range
    expect(mid).toBeCloseTo(1 - 40 / 60);
    expect(logScale(0.1, 1.0)).toBeGreaterThan(mid);
  });

  it("maps to in-range rgb triples", () => {
    for (const u of [0, 0.25, 0.5, 0.75, 1]) {
      for (const c of colormap(u)) {
        expect(c).toBeGreaterThanOrEqual(0);
        expect(c).toBeLessThanOrEqual(255);
      }
    }
  });
});

describe("vertex hit testing", () => {
  const regions = [
    {
      id: 0,
      polyline: [
        [[0, 2.0], [10, 2.0]],
        [[0, 4.0], [10, 4.0]],
      ] as [Array<[number, number]>, Array<[number, number]>],
    },
  ];

  it("finds the nearest vertex inside the radius", () => {
    const view = fullViewport(meta);
    const x = timeToX(10, view, size);
    const y = freqToY(4.0, view, size);
    const hit = hitTestVertex(regions, x + 3, y - 3, view, size);
    expect(hit).toEqual({ regionIndex: 0, boundary: 1, vertexIndex: 1 });
  });

  it("returns null away from every vertex", () => {
    const view = fullViewport(meta);
    expect(hitTestVertex(regions, 400, 30, view, size)).toBeNull();
  });
});
