// Submission flow: client-side validation, single in-flight
// recomputation with one queued follow-up, and previous/current result
// retention for the side-by-side diff.

import { RunApi, RunSummary, ServiceRejection } from "./api.js";
import {
  GridBounds,
  Region,
  RegionDiagnostics,
  validateRegions,
} from "./regions.js";

export interface SubmissionOutcome {
  summary: RunSummary | null;
  rejection: RegionDiagnostics | null;
  previous: RunSummary | null;
}

export class SubmitQueue {
  private inFlight = false;
  private pending: { drive: number; regions: Region[] } | null = null;
  private lastSummary: RunSummary | null = null;

  constructor(
    private readonly api: RunApi,
    private readonly bounds: GridBounds | null,
  ) {}

  get busy(): boolean {
    return this.inFlight;
  }

  get previousSummary(): RunSummary | null {
    return this.lastSummary;
  }

  /**
   * Validate locally first; invalid drafts never reach the wire. While
   * a recomputation is in flight, one replacement submission is held
   * and dispatched afterward (duplicate triggers collapse).
   */
  async submit(drive: number, regions: Region[]): Promise<SubmissionOutcome> {
    const local = validateRegions(regions, this.bounds);
    if (local) {
      return { summary: null, rejection: local, previous: this.lastSummary };
    }
    if (this.inFlight) {
      this.pending = { drive, regions };
      return {
        summary: null,
        rejection: null,
        previous: this.lastSummary,
      };
    }
    this.inFlight = true;
    try {
      let outcome = await this.post(drive, regions);
      while (this.pending) {
        const next = this.pending;
        this.pending = null;
        outcome = await this.post(next.drive, next.regions);
      }
      return outcome;
    } finally {
      this.inFlight = false;
    }
  }

  private async post(
    drive: number,
    regions: Region[],
  ): Promise<SubmissionOutcome> {
    const previous = this.lastSummary;
    try {
      const summary = await this.api.submitRegions(drive, regions);
      this.lastSummary = summary;
      return { summary, rejection: null, previous };
    } catch (err) {
      if (err instanceof ServiceRejection && err.status === 422) {
        return {
          summary: null,
          rejection: err.diagnostics as RegionDiagnostics,
          previous,
        };
      }
      throw err;
    }
  }
}

export interface ModeRow {
  mode: number;
  fHz: number;
  zetaPercent: number;
  moduli: number[];
  phasesDeg: number[];
}

/** Flatten a modal-set payload into display rows (no numerics beyond
 * formatting the service-provided complex entries). */
export function modeTable(summary: RunSummary): ModeRow[] {
  if (!summary.fused) return [];
  return summary.fused.modes.map((m, j) => ({
    mode: j,
    fHz: m.f_hz,
    zetaPercent: 100.0 * m.zeta,
    moduli: m.psi.map((c) => Math.hypot(c.re, c.im)),
    phasesDeg: m.psi.map((c) => (Math.atan2(c.im, c.re) * 180.0) / Math.PI),
  }));
}

export interface DiffCell {
  previous: number | null;
  current: number;
  delta: number | null;
}

/** Side-by-side comparison of two summaries' headline numbers. */
export function diffSummaries(
  previous: RunSummary | null,
  current: RunSummary,
): { eFinal: DiffCell; frequencies: DiffCell[] } {
  const prevModes = previous?.fused?.modes ?? null;
  const curModes = current.fused?.modes ?? [];
  return {
    eFinal: {
      previous: previous?.E_final ?? null,
      current: current.E_final ?? NaN,
      delta:
        previous?.E_final != null && current.E_final != null
          ? current.E_final - previous.E_final
          : null,
    },
    frequencies: curModes.map((m, j) => ({
      previous: prevModes?.[j]?.f_hz ?? null,
      current: m.f_hz,
      delta: prevModes?.[j] ? m.f_hz - prevModes[j].f_hz : null,
    })),
  };
}
