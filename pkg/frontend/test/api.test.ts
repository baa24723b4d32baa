import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import { MockService, makeVolume } from "./mock.js";

describe("slice url builder", () => {
  it("encodes every parameter", () => {
    const api = new ApiClient("http://svc:8000");
    const url = api.sliceUrl({ volume: "case_a", axis: "y", index: 17, wlLow: 50, wlHigh: 400 });
    expect(url).toBe("http://svc:8000/slice?volume=case_a&axis=y&index=17&wl_low=50&wl_high=400");
  });
});

describe("volumes", () => {
  it("parses and validates the listing", async () => {
    const mock = new MockService({ volumes: [makeVolume("a", [4, 5, 6], [1, 1, 1])] });
    const api = new ApiClient("", mock.fetch);
    const vols = await api.volumes();
    expect(vols).toHaveLength(1);
    expect(vols[0].dims).toEqual([4, 5, 6]);
  });

  it("rejects malformed volume entries", async () => {
    const entry = {
      id: "x",
      dims: [1, 2],
      spacing_mm: [1, 1, 1],
      frame: { origin_mm: [0, 0, 0], axes: [[1, 0, 0], [0, 1, 0], [0, 0, 1]], label: "unknown" },
    };
    const bad = async () => new Response(JSON.stringify([entry]), { status: 200 });
    const api = new ApiClient("", bad);
    await expect(api.volumes()).rejects.toThrow(/dims/);
  });
});

describe("match", () => {
  it("posts the request body and parses the response", async () => {
    const mock = new MockService({ volumes: [] });
    const api = new ApiClient("", mock.fetch);
    const resp = await api.match({ source_id: "a", target_id: "b", point_mm: [1, 2, 3], variant: 7 });
    expect(resp.point_mm).toEqual([1, 2, 3]);
    expect(resp.method).toBe("cpm7");
    const sent = mock.requests[0];
    expect(sent.init?.method).toBe("POST");
    expect(sent.body?.variant).toBe(7);
  });

  it("surfaces the service's error detail", async () => {
    const mock = new MockService({ volumes: [], matchStatus: 404 });
    const api = new ApiClient("", mock.fetch);
    await expect(
      api.match({ source_id: "a", target_id: "b", point_mm: [0, 0, 0], variant: 13 }),
    ).rejects.toThrowError(ApiError);
    await expect(
      api.match({ source_id: "a", target_id: "b", point_mm: [0, 0, 0], variant: 13 }),
    ).rejects.toThrow("scripted failure");
  });
});
