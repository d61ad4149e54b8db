// End-to-end parity against the real service: the UI path (client
// validation + API client + submit queue) must reproduce the batch
// pipeline's modal set byte for byte when resubmitting the
// auto-suggested regions, and reject invalid uploads with diagnostics
// matching the client's own validation.

import { execFileSync, spawn, ChildProcess } from "node:child_process";
import { createHash } from "node:crypto";
import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { RunApi } from "../src/api.js";
import { Region, validateRegions } from "../src/regions.js";
import { SubmitQueue } from "../src/submit.js";

const PORT = 8971;
const BASE = `http://127.0.0.1:${PORT}`;
const RUN_DIR = join(__dirname, "..", ".cache", "bench-run");

let server: ChildProcess | null = null;

function buildRunDir(): void {
  if (existsSync(join(RUN_DIR, "fused.modalset.json"))) return;
  const script = `
import json
from wavemodal.pipeline import PipelineConfig, run_pipeline
config = PipelineConfig.from_json_dict({
    "output_dir": ${JSON.stringify(RUN_DIR)},
    "band_hz": [1.0, 6.0],
    "omega_c": 60.0,
    "grid_points": 200,
    "n_modes": 3,
    "simulate_bench": {"drives": [0], "duration": 40.0},
})
run_pipeline(config)
print("run ready")
`;
  execFileSync("python3", ["-c", script], {
    stdio: "inherit",
    timeout: 180_000,
  });
}

async function waitForService(api: RunApi): Promise<void> {
  const t0 = Date.now();
  for (;;) {
    try {
      await api.status();
      return;
    } catch {
      if (Date.now() - t0 > 60_000) throw new Error("service did not start");
      await new Promise((resolve) => setTimeout(resolve, 300));
    }
  }
}

beforeAll(async () => {
  buildRunDir();
  server = spawn(
    "python3",
    [
      "-c",
      `from wavemodal.service import serve_api; serve_api(${JSON.stringify(
        RUN_DIR,
      )}, port=${PORT})`,
    ],
    { stdio: "ignore" },
  );
  await waitForService(new RunApi(BASE));
}, 240_000);

afterAll(() => {
  server?.kill();
});

describe("UI parity with the batch pipeline", () => {
  it("resubmitting the auto-suggested regions reproduces the batch hash",
    async () => {
      const api = new RunApi(BASE);
      const batchBytes = readFileSync(join(RUN_DIR, "fused.modalset.json"));
      const batchHash = createHash("sha256").update(batchBytes).digest("hex");

      const meta = await api.spectrogramMeta(0, 0);
      const regions = await api.regions(0);
      expect(validateRegions(regions, {
        fMin: meta.f_min,
        fMax: meta.f_max,
        tMin: 0,
        tMax: (meta.n_time - 1) * meta.dt,
      })).toBeNull();

      const queue = new SubmitQueue(api, {
        fMin: meta.f_min,
        fMax: meta.f_max,
        tMin: 0,
        tMax: (meta.n_time - 1) * meta.dt,
      });
      const outcome = await queue.submit(0, regions);
      await api.waitIdle();
      expect(outcome.rejection).toBeNull();
      expect(outcome.summary?.modalset_sha256).toBe(batchHash);

      const afterBytes = readFileSync(join(RUN_DIR, "fused.modalset.json"));
      expect(createHash("sha256").update(afterBytes).digest("hex")).toBe(
        batchHash,
      );
    }, 180_000);

  it("rejects crossing boundaries identically on both sides", async () => {
    const api = new RunApi(BASE);
    const crossed: Region[] = [
      {
        id: 0,
        polyline: [
          [[0, 3.0], [40, 3.0]],
          [[0, 2.0], [40, 2.0]],
        ],
      },
    ];
    const clientDiag = validateRegions(crossed, null);
    expect(clientDiag?.code).toBe("invalid-regions");

    // bypass client validation to observe the server's verdict
    let serverDiag: unknown = null;
    try {
      await api.submitRegions(0, crossed);
    } catch (err) {
      serverDiag = (err as { diagnostics: unknown }).diagnostics;
    }
    expect(serverDiag).not.toBeNull();
    const sd = serverDiag as { code: string; message: string; region_ids: number[] };
    expect(sd.code).toBe(clientDiag?.code);
    expect(sd.message).toBe(clientDiag?.message);
    expect(sd.region_ids).toEqual(clientDiag?.region_ids);
  });

  it("rejects overlapping regions identically on both sides", async () => {
    const api = new RunApi(BASE);
    const overlapping: Region[] = [
      {
        id: 0,
        polyline: [
          [[0, 1.0], [40, 1.0]],
          [[0, 4.0], [40, 4.0]],
        ],
      },
      {
        id: 1,
        polyline: [
          [[0, 3.5], [40, 3.5]],
          [[0, 6.0], [40, 6.0]],
        ],
      },
    ];
    const clientDiag = validateRegions(overlapping, null);
    expect(clientDiag?.code).toBe("invalid-regions");
    expect(clientDiag?.region_ids).toEqual([0, 1]);

    let serverDiag: unknown = null;
    try {
      await api.submitRegions(0, overlapping);
    } catch (err) {
      serverDiag = (err as { diagnostics: unknown }).diagnostics;
    }
    const sd = serverDiag as {
      code: string;
      message: string;
      region_ids: number[];
      time_s: number;
    };
    expect(sd.code).toBe(clientDiag?.code);
    expect(sd.message).toBe(clientDiag?.message);
    expect(sd.region_ids).toEqual(clientDiag?.region_ids);
    expect(sd.time_s).toBe(clientDiag?.time_s);
  });

  it("serves tiles the client can decode", async () => {
    const api = new RunApi(BASE);
    const tile = await api.spectrogramTile(0, 0, 128, 64);
    expect(tile.rows).toBeGreaterThan(0);
    expect(tile.cols).toBeGreaterThan(0);
    expect(tile.values.length).toBe(tile.rows * tile.cols);
    let max = 0;
    for (const v of tile.values) max = Math.max(max, v);
    expect(max).toBeGreaterThan(0);
  });
});
