import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ConsoleSession, displayedProbability } from "../src/session.js";
import type { QueryResult } from "../src/types.js";

function jsonResponse(body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status: 200,
    headers: { "content-type": "application/json" },
  });
}

function areaResult(probability: number): QueryResult {
  return {
    kind: "area",
    probability_above: probability,
    threshold: 1,
    horizon: 6,
    per_patch_below: { p0: 1 - probability },
    cells_per_patch: { p0: 4 },
    members_per_patch: { p0: 8 },
    ensemble_ids: { p0: "abc" },
  };
}

const patches = [
  { patch_id: "p0", origin: [0, 0], grid_size: 2, timesteps: 48, start: "2024-01-01T00:00:00", cell_size_m: 30 },
];

function sessionWith(handler: (url: string, init?: RequestInit) => Promise<Response>): ConsoleSession {
  const fetchFn = ((url: string, init?: RequestInit) => handler(url, init)) as typeof fetch;
  return new ConsoleSession(new ApiClient("http://svc", fetchFn));
}

describe("no client-side probability math", () => {
  it("displays the service's number verbatim, including route results", async () => {
    // intercept every response; the displayed value must be the intercepted
    // field, bit for bit, even when it is deliberately "wrong"
    const bogus = 0.12345678901234567; // would never equal 1 - per_patch product
    const seen: unknown[] = [];
    const session = sessionWith(async (url, init) => {
      if (url.endsWith("/patches")) return jsonResponse(patches);
      if (url.endsWith("/forecast")) {
        return jsonResponse({
          ensemble_id: "abc", patch_id: "p0", start: "s", horizon: 6, scenarios: 8,
          seed: 0, checkpoint_id: "-", mean: [[[0]]], std: [[[0]]],
        });
      }
      if (url.endsWith("/query/area")) {
        seen.push(JSON.parse(String(init?.body)));
        return jsonResponse(areaResult(bogus));
      }
      if (url.endsWith("/query/route")) {
        const result = { ...areaResult(0.25), kind: "route", not_flooded: 0.75 };
        return jsonResponse(result);
      }
      throw new Error(`unexpected ${url}`);
    });
    await session.loadPatches();
    await session.requestForecast({ start: "2024-01-01T12:00:00", horizon: 6, scenarios: 8, seed: 0 });
    const entry = await session.submitQuery({
      kind: "area", polygon: [[0, 0], [2, 0], [2, 2], [0, 2]], threshold: 1, horizon: 6,
    });
    expect(entry.displayed).toBe(bogus);
    const route = await session.submitQuery({
      kind: "route", polygon: [[0, 0], [2, 0], [2, 2], [0, 2]], threshold: 0, horizon: 6,
    });
    expect(route.displayed).toBe(0.75); // the not_flooded field, not 1 - 0.25 computed here
    expect(displayedProbability(route.result)).toBe(0.75);
    expect(seen.length).toBe(1);
  });
});

describe("request discipline", () => {
  it("keeps at most one forecast in flight", async () => {
    let calls = 0;
    let release!: () => void;
    const gate = new Promise<void>((resolve) => (release = resolve));
    const session = sessionWith(async (url) => {
      if (url.endsWith("/patches")) return jsonResponse(patches);
      calls += 1;
      await gate;
      return jsonResponse({
        ensemble_id: "e1", patch_id: "p0", start: "s", horizon: 6, scenarios: 8,
        seed: 0, checkpoint_id: "-", mean: [[[0]]], std: [[[0]]],
      });
    });
    await session.loadPatches();
    const params = { start: "t", horizon: 6, scenarios: 8, seed: 0 };
    const a = session.requestForecast(params);
    const b = session.requestForecast(params);
    release();
    const [ra, rb] = await Promise.all([a, b]);
    expect(calls).toBe(1);
    expect(ra).toBe(rb);
  });

  it("queries resolve in FIFO submission order", async () => {
    const order: number[] = [];
    let n = 0;
    const session = sessionWith(async (url) => {
      if (url.endsWith("/patches")) return jsonResponse(patches);
      if (url.endsWith("/forecast")) {
        return jsonResponse({
          ensemble_id: "e", patch_id: "p0", start: "s", horizon: 6, scenarios: 8,
          seed: 0, checkpoint_id: "-", mean: [[[0]]], std: [[[0]]],
        });
      }
      n += 1;
      const mine = n;
      // first query answers slowest; FIFO must still hold
      await new Promise((resolve) => setTimeout(resolve, mine === 1 ? 30 : 1));
      order.push(mine);
      return jsonResponse(areaResult(mine / 10));
    });
    await session.loadPatches();
    await session.requestForecast({ start: "t", horizon: 6, scenarios: 8, seed: 0 });
    const polygon: [number, number][] = [[0, 0], [2, 0], [2, 2], [0, 2]];
    const q1 = session.submitQuery({ kind: "area", polygon, threshold: 1, horizon: 6 });
    const q2 = session.submitQuery({ kind: "area", polygon, threshold: 2, horizon: 6 });
    const [e1, e2] = await Promise.all([q1, q2]);
    expect(order).toEqual([1, 2]);
    expect(e1.displayed).toBe(0.1);
    expect(e2.displayed).toBe(0.2);
    expect(session.history.map((h) => h.displayed)).toEqual([0.1, 0.2]);
  });

  it("rejects invalid polygons before any request", async () => {
    let queries = 0;
    const session = sessionWith(async (url) => {
      if (url.endsWith("/patches")) return jsonResponse(patches);
      if (url.endsWith("/forecast")) {
        return jsonResponse({
          ensemble_id: "e", patch_id: "p0", start: "s", horizon: 6, scenarios: 8,
          seed: 0, checkpoint_id: "-", mean: [[[0]]], std: [[[0]]],
        });
      }
      queries += 1;
      return jsonResponse(areaResult(0));
    });
    await session.loadPatches();
    await session.requestForecast({ start: "t", horizon: 6, scenarios: 8, seed: 0 });
    await expect(
      session.submitQuery({ kind: "area", polygon: [[0, 0], [1, 1]], threshold: 1, horizon: 6 }),
    ).rejects.toThrow(/3 vertices/);
    expect(queries).toBe(0);
  });

  it("replay reuses the recorded ensemble ids", async () => {
    const bodies: { ensemble_ids?: string[]; forecast?: unknown }[] = [];
    const session = sessionWith(async (url, init) => {
      if (url.endsWith("/patches")) return jsonResponse(patches);
      if (url.endsWith("/forecast")) {
        return jsonResponse({
          ensemble_id: "eid-1", patch_id: "p0", start: "s", horizon: 6, scenarios: 8,
          seed: 0, checkpoint_id: "-", mean: [[[0]]], std: [[[0]]],
        });
      }
      bodies.push(JSON.parse(String(init?.body)));
      return jsonResponse({ ...areaResult(0.5), ensemble_ids: { p0: "eid-1" } });
    });
    await session.loadPatches();
    await session.requestForecast({ start: "t", horizon: 6, scenarios: 8, seed: 0 });
    const polygon: [number, number][] = [[0, 0], [2, 0], [2, 2], [0, 2]];
    const entry = await session.submitQuery({ kind: "area", polygon, threshold: 1, horizon: 6 });
    const replayed = await session.replay(entry);
    expect(bodies[0].forecast).toBeDefined();
    expect(bodies[1].ensemble_ids).toEqual(["eid-1"]);
    expect(replayed.displayed).toBe(entry.displayed);
  });
});
