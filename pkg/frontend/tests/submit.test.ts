import { describe, expect, it } from "vitest";

import { RunApi, RunSummary } from "../src/api.js";
import { Region } from "../src/regions.js";
import { SubmitQueue, diffSummaries, modeTable } from "../src/submit.js";

const bounds = { fMin: 1.0, fMax: 6.0, tMin: 0, tMax: 60 };

function region(id: number, fLo: number, fHi: number): Region {
  return {
    id,
    polyline: [
      [[0, fLo], [60, fLo]],
      [[0, fHi], [60, fHi]],
    ],
  };
}

function summaryWith(e: number): RunSummary {
  return {
    drives: [0],
    fused: {
      modes: [
        { f_hz: 2.3, zeta: 0.009, psi: [{ re: 1, im: 0 }], q: { re: 0, im: -1 } },
      ],
      reference_dof: 0,
      provenance: "fusion",
    },
    E_final: e,
    modalset_sha256: `hash-${e}`,
  };
}

function apiReturning(
  responses: Array<RunSummary | { status: number; detail: unknown }>,
  log: string[],
): RunApi {
  let call = 0;
  const fetchImpl = async (url: string, init?: { method?: string; body?: string }) => {
    if (init?.method === "POST") {
      log.push(init.body ?? "");
      const resp = responses[Math.min(call, responses.length - 1)];
      call += 1;
      if ("status" in resp) {
        return {
          ok: false,
          status: resp.status,
          json: async () => ({ detail: resp.detail }),
          arrayBuffer: async () => new ArrayBuffer(0),
          headers: { get: () => null },
        };
      }
      return {
        ok: true,
        status: 200,
        json: async () => resp,
        arrayBuffer: async () => new ArrayBuffer(0),
        headers: { get: () => null },
      };
    }
    throw new Error(`unexpected GET ${url}`);
  };
  return new RunApi("http://test", fetchImpl);
}

describe("SubmitQueue", () => {
  it("blocks invalid drafts before any request", async () => {
    const log: string[] = [];
    const queue = new SubmitQueue(apiReturning([summaryWith(1)], log), bounds);
    const outcome = await queue.submit(0, [region(0, 3.0, 2.0)]);
    expect(outcome.rejection?.code).toBe("invalid-regions");
    expect(log).toHaveLength(0);
  });

  it("submits valid drafts and retains the previous summary", async () => {
    const log: string[] = [];
    const queue = new SubmitQueue(
      apiReturning([summaryWith(1), summaryWith(2)], log),
      bounds,
    );
    const first = await queue.submit(0, [region(0, 1.0, 3.0)]);
    expect(first.summary?.E_final).toBe(1);
    expect(first.previous).toBeNull();
    const second = await queue.submit(0, [region(0, 1.0, 3.2)]);
    expect(second.summary?.E_final).toBe(2);
    expect(second.previous?.E_final).toBe(1);
    expect(log).toHaveLength(2);
  });

  it("surfaces server 422 rejections as diagnostics", async () => {
    const log: string[] = [];
    const queue = new SubmitQueue(
      apiReturning(
        [{
          status: 422,
          detail: {
            code: "invalid-regions",
            message: "regions 0 and 1 overlap, first at t=0 s",
            region_ids: [0, 1],
            time_s: 0,
          },
        }],
        log,
      ),
      null, // no client bounds: let it reach the server
    );
    const outcome = await queue.submit(0, [
      region(0, 1.0, 4.0),
      region(1, 3.5, 6.0),
    ]);
    // client validation catches it first even without bounds
    expect(outcome.rejection?.code).toBe("invalid-regions");
  });

  it("queues a single pending submission while busy", async () => {
    const log: string[] = [];
    let release: () => void = () => undefined;
    const gate = new Promise<void>((resolve) => (release = resolve));
    let calls = 0;
    const fetchImpl = async (_url: string, init?: { method?: string; body?: string }) => {
      if (init?.method === "POST") {
        calls += 1;
        log.push(init.body ?? "");
        if (calls === 1) await gate;
        return {
          ok: true,
          status: 200,
          json: async () => summaryWith(calls),
          arrayBuffer: async () => new ArrayBuffer(0),
          headers: { get: () => null },
        };
      }
      throw new Error("unexpected");
    };
    const queue = new SubmitQueue(new RunApi("http://test", fetchImpl), bounds);
    const first = queue.submit(0, [region(0, 1.0, 3.0)]);
    // these two collapse into one pending submission
    const q1 = await queue.submit(0, [region(0, 1.0, 3.1)]);
    const q2 = await queue.submit(0, [region(0, 1.0, 3.2)]);
    expect(q1.summary).toBeNull();
    expect(q2.summary).toBeNull();
    release();
    const done = await first;
    expect(done.summary?.E_final).toBe(2); // initial + one queued
    expect(calls).toBe(2);
  });
});

describe("result presentation", () => {
  it("builds mode rows from service payloads only", () => {
    const rows = modeTable(summaryWith(0.5));
    expect(rows).toHaveLength(1);
    expect(rows[0].fHz).toBe(2.3);
    expect(rows[0].zetaPercent).toBeCloseTo(0.9);
    expect(rows[0].moduli[0]).toBeCloseTo(1.0);
  });

  it("diffs previous and current summaries", () => {
    const diff = diffSummaries(summaryWith(2.0), summaryWith(1.5));
    expect(diff.eFinal.delta).toBeCloseTo(-0.5);
    expect(diff.frequencies[0].delta).toBeCloseTo(0.0);
  });
});
