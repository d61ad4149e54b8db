// Typed client for the run service under /api/v1.
//
// Every number the UI displays comes out of these calls; the client
// performs no numerics beyond decoding payloads.

import type { Region, RegionDiagnostics } from "./regions.js";

export interface SpectrogramMeta {
  n_freq: number;
  n_time: number;
  dt: number;
  omega_c: number;
  f_min: number;
  f_max: number;
  freqs_hz: number[];
  coi_hz: number[];
  coi_min_hz: number;
  label: string;
}

export interface Tile {
  rows: number;
  cols: number;
  fRange: [number, number];
  tRange: [number, number];
  values: Float32Array;
}

export interface ModeEntry {
  f_hz: number;
  zeta: number;
  psi: Array<{ re: number; im: number }>;
  q: { re: number; im: number };
}

export interface ModalSetJson {
  modes: ModeEntry[];
  reference_dof: number;
  provenance: string;
}

export interface FrfJson {
  freqs_hz: number[];
  kind: string;
  values: Array<Array<{ re: number[]; im: number[] }>>;
}

export interface RunSummary {
  drives: number[];
  fused: ModalSetJson | null;
  E_final: number | null;
  modalset_sha256: string | null;
}

export interface FusionReport {
  weights: number[][];
  E_initial_per_drive: number[];
  E_final: number;
  iterations: number;
}

export class ServiceRejection extends Error {
  constructor(
    readonly status: number,
    readonly diagnostics: RegionDiagnostics | { code: string; message: string },
  ) {
    super(`service rejected request (${status}): ${diagnostics.message}`);
  }
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  arrayBuffer(): Promise<ArrayBuffer>;
  headers: { get(name: string): string | null };
}>;

export class RunApi {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  private url(path: string): string {
    return `${this.baseUrl}/api/v1${path}`;
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.url(path));
    if (!resp.ok) {
      throw new ServiceRejection(resp.status, {
        code: "request-failed",
        message: `GET ${path} -> ${resp.status}`,
      });
    }
    return (await resp.json()) as T;
  }

  manifest(): Promise<{ config_hash: string; stages: Record<string, unknown> }> {
    return this.getJson("/manifest");
  }

  status(): Promise<{ status: string; detail: string }> {
    return this.getJson("/status");
  }

  spectrograms(): Promise<Array<{ drive: number; channels: number }>> {
    return this.getJson("/spectrograms");
  }

  spectrogramMeta(drive: number, channel: number): Promise<SpectrogramMeta> {
    return this.getJson(`/spectrograms/${drive}/${channel}/meta`);
  }

  async spectrogramTile(
    drive: number,
    channel: number,
    maxW = 512,
    maxH = 256,
  ): Promise<Tile> {
    const resp = await this.fetchImpl(
      this.url(
        `/spectrograms/${drive}/${channel}/tile?max_w=${maxW}&max_h=${maxH}`,
      ),
    );
    if (!resp.ok) {
      throw new ServiceRejection(resp.status, {
        code: "request-failed",
        message: `tile -> ${resp.status}`,
      });
    }
    const shape = resp.headers.get("x-tile-shape") ?? "0,0";
    const [rows, cols] = shape.split(",").map(Number);
    const fRange = (resp.headers.get("x-freq-range") ?? "0,0")
      .split(",")
      .map(Number) as [number, number];
    const tRange = (resp.headers.get("x-time-range") ?? "0,0")
      .split(",")
      .map(Number) as [number, number];
    const values = new Float32Array(await resp.arrayBuffer());
    if (values.length !== rows * cols) {
      throw new Error(
        `tile size mismatch: ${values.length} values for ${rows}x${cols}`,
      );
    }
    return { rows, cols, fRange, tRange, values };
  }

  regions(drive: number): Promise<Region[]> {
    return this.getJson(`/regions/${drive}`);
  }

  async submitRegions(drive: number, regions: Region[]): Promise<RunSummary> {
    const resp = await this.fetchImpl(this.url(`/regions/${drive}`), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(regions),
    });
    if (!resp.ok) {
      const payload = (await resp.json()) as { detail: RegionDiagnostics };
      throw new ServiceRejection(resp.status, payload.detail);
    }
    return (await resp.json()) as RunSummary;
  }

  modal(drive: number): Promise<ModalSetJson> {
    return this.getJson(`/modal/${drive}`);
  }

  fused(): Promise<RunSummary> {
    return this.getJson("/modal/fused");
  }

  fusionReport(): Promise<FusionReport> {
    return this.getJson("/fusion");
  }

  measuredFrf(drive: number): Promise<FrfJson> {
    return this.getJson(`/frf/measured/${drive}`);
  }

  reconstructedFrf(): Promise<FrfJson> {
    return this.getJson("/frf/reconstructed");
  }

  components(drive: number): Promise<{
    n_dof: number;
    n_modes: number;
    dt: number;
    series: number[][][];
  }> {
    return this.getJson(`/components/${drive}`);
  }

  /** Poll until the service reports idle (or error) again. */
  async waitIdle(intervalMs = 500, timeoutMs = 120_000): Promise<void> {
    const t0 = Date.now();
    for (;;) {
      const s = await this.status();
      if (s.status === "idle") return;
      if (s.status === "error") {
        throw new Error(`recomputation failed: ${s.detail}`);
      }
      if (Date.now() - t0 > timeoutMs) {
        throw new Error("timed out waiting for recomputation");
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }
}
