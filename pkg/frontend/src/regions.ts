// Region drafts and client-side validation.
//
// Validation mirrors the service rules exactly (same codes and
// messages shape) so a draft rejected here would also be rejected with
// matching diagnostics by the server, and anything sent is expected to
// pass.

export type Polyline = Array<[number, number]>; // [time_s, f_hz]

export interface Region {
  id: number;
  polyline: [Polyline, Polyline]; // [lower, upper]
}

export interface RegionDiagnostics {
  code: "invalid-regions" | "malformed-regions";
  message: string;
  region_ids: number[];
  time_s: number | null;
}

export interface GridBounds {
  fMin: number;
  fMax: number;
  tMin: number;
  tMax: number;
}

export interface RegionDraft {
  regions: Region[];
  dirty: boolean;
  validation: RegionDiagnostics | null;
}

function interp(poly: Polyline, t: number): number {
  if (poly.length === 0) return NaN;
  if (t <= poly[0][0]) return poly[0][1];
  const last = poly[poly.length - 1];
  if (t >= last[0]) return last[1];
  for (let i = 1; i < poly.length; i++) {
    const [t0, f0] = poly[i - 1];
    const [t1, f1] = poly[i];
    if (t <= t1) {
      if (t1 === t0) return f1;
      return f0 + ((f1 - f0) * (t - t0)) / (t1 - t0);
    }
  }
  return last[1];
}

export function lowerAt(region: Region, t: number): number {
  return interp(region.polyline[0], t);
}

export function upperAt(region: Region, t: number): number {
  return interp(region.polyline[1], t);
}

function vertexTimes(regions: Region[]): number[] {
  const ts = new Set<number>();
  for (const r of regions) {
    for (const poly of r.polyline) for (const [t] of poly) ts.add(t);
  }
  return [...ts].sort((a, b) => a - b);
}

/** Structural checks; mirrors the server's malformed-regions branch. */
export function checkShape(regions: Region[]): RegionDiagnostics | null {
  for (const r of regions) {
    if (!Array.isArray(r.polyline) || r.polyline.length !== 2) {
      return {
        code: "malformed-regions",
        message: "each region needs exactly 2 boundary polylines",
        region_ids: [r.id],
        time_s: null,
      };
    }
    for (const poly of r.polyline) {
      if (poly.length < 1) {
        return {
          code: "malformed-regions",
          message: `region ${r.id}: empty boundary polyline`,
          region_ids: [r.id],
          time_s: null,
        };
      }
      for (let i = 1; i < poly.length; i++) {
        if (poly[i][0] < poly[i - 1][0]) {
          return {
            code: "malformed-regions",
            message: `region ${r.id}: boundary times must be non-decreasing`,
            region_ids: [r.id],
            time_s: null,
          };
        }
      }
    }
  }
  return null;
}

/**
 * Semantic checks at every relevant time: boundaries must not cross,
 * bands must stay inside the grid span, regions must be pairwise
 * disjoint. Matches the server's invalid-regions diagnostics.
 */
export function validateRegions(
  regions: Region[],
  bounds: GridBounds | null,
  sampleTimes?: number[],
): RegionDiagnostics | null {
  const shape = checkShape(regions);
  if (shape) return shape;
  const times = sampleTimes ?? vertexTimes(regions);
  const probe = times.length ? times : [0];

  for (const r of regions) {
    for (const t of probe) {
      if (lowerAt(r, t) >= upperAt(r, t)) {
        return {
          code: "invalid-regions",
          message: `region ${r.id}: lower boundary must stay below upper`,
          region_ids: [r.id],
          time_s: t,
        };
      }
    }
    if (bounds) {
      const allBelow = probe.every((t) => upperAt(r, t) <= bounds.fMin);
      const allAbove = probe.every((t) => lowerAt(r, t) >= bounds.fMax);
      if (allBelow || allAbove) {
        return {
          code: "invalid-regions",
          message:
            `region ${r.id} lies outside the grid span ` +
            `[${bounds.fMin}, ${bounds.fMax}] Hz`,
          region_ids: [r.id],
          time_s: null,
        };
      }
    }
  }

  const sorted = [...regions].sort((a, b) => a.id - b.id);
  for (let a = 0; a < sorted.length; a++) {
    for (let b = a + 1; b < sorted.length; b++) {
      for (const t of probe) {
        const overlap =
          lowerAt(sorted[a], t) < upperAt(sorted[b], t) &&
          lowerAt(sorted[b], t) < upperAt(sorted[a], t);
        if (overlap) {
          return {
            code: "invalid-regions",
            message:
              `regions ${sorted[a].id} and ${sorted[b].id} overlap, ` +
              `first at t=${t} s`,
            region_ids: [sorted[a].id, sorted[b].id],
            time_s: t,
          };
        }
      }
    }
  }
  return null;
}

/** Snap a dragged vertex onto the frequency grid. */
export function snapFrequency(fHz: number, grid: number[]): number {
  if (!grid.length) return fHz;
  let best = grid[0];
  let dist = Math.abs(fHz - best);
  for (const g of grid) {
    const d = Math.abs(fHz - g);
    if (d < dist) {
      best = g;
      dist = d;
    }
  }
  return best;
}

export function moveVertex(
  draft: RegionDraft,
  regionIndex: number,
  boundary: 0 | 1,
  vertexIndex: number,
  tS: number,
  fHz: number,
  grid: number[],
): RegionDraft {
  const regions = draft.regions.map((r, i) => {
    if (i !== regionIndex) return r;
    const polyline = r.polyline.map((poly, b) => {
      if (b !== boundary) return poly;
      const next = poly.map((v, k) =>
        k === vertexIndex ? ([tS, snapFrequency(fHz, grid)] as [number, number]) : v,
      );
      next.sort((u, v) => u[0] - v[0]);
      return next;
    }) as [Polyline, Polyline];
    return { ...r, polyline };
  });
  return { regions, dirty: true, validation: null };
}

// -- local persistence -------------------------------------------------

export interface DraftStore {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

const draftKey = (runId: string, drive: number) =>
  `region-studio/${runId}/drive${drive}/draft`;

export function saveDraft(
  store: DraftStore,
  runId: string,
  drive: number,
  draft: RegionDraft,
): void {
  store.setItem(draftKey(runId, drive), JSON.stringify(draft));
}

export function loadDraft(
  store: DraftStore,
  runId: string,
  drive: number,
): RegionDraft | null {
  const raw = store.getItem(draftKey(runId, drive));
  if (raw === null) return null;
  try {
    return JSON.parse(raw) as RegionDraft;
  } catch {
    return null;
  }
}

export function discardDraft(
  store: DraftStore,
  runId: string,
  drive: number,
): void {
  store.removeItem(draftKey(runId, drive));
}
