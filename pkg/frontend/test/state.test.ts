import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ViewerController } from "../src/state.js";
import { MockService, makeVolume } from "./mock.js";

const DIMS: [number, number, number] = [40, 50, 60];
const SPACING: [number, number, number] = [1.0, 1.0, 2.0];

function setup(opts: Partial<ConstructorParameters<typeof MockService>[0]> = {}) {
  const source = makeVolume("a", DIMS, SPACING);
  const target = makeVolume("b", DIMS, SPACING);
  const mock = new MockService({ volumes: [source, target], ...opts });
  const api = new ApiClient("", mock.fetch);
  const controller = new ViewerController(api, source, target, 2);
  return { controller, mock };
}

describe("click to match to crosshair", () => {
  it("places the target crosshair within one pixel of the mock's point", async () => {
    const fixed: [number, number, number] = [12.0, 30.0, 44.0];
    const { controller } = setup({ onMatch: () => ({
      point_mm: fixed, similarity: 0.8, mean_consistency_mm: 1.5, elapsed_seconds: 0.2, method: "cpm13",
    }) });
    await controller.clickSource(20, 33);
    const cross = controller.targetCrosshair()!;
    expect(cross).not.toBeNull();
    // zoom 2, unit xy spacing: display px = (mm + 0.5) * 2 - 0.5
    expect(Math.abs(cross.xDisplay - ((12.0 + 0.5) * 2 - 0.5))).toBeLessThanOrEqual(1.0);
    expect(Math.abs(cross.yDisplay - ((30.0 + 0.5) * 2 - 0.5))).toBeLessThanOrEqual(1.0);
    expect(controller.target.sliceIndex).toBe(22); // 44 mm / 2 mm spacing
    expect(cross.onCurrentSlice).toBe(true);
    expect(cross.ringRxPx).toBeCloseTo(20, 9); // 10 mm ring at zoom 2
  });

  it("sends the clicked world point as the query", async () => {
    const { controller, mock } = setup();
    await controller.clickSource(21, 9); // zoom 2 -> image px (10.25, 4.25) on slice 30
    const body = mock.requests.find((r) => r.url.includes("/match"))!.body!;
    expect(body.source_id).toBe("a");
    expect(body.target_id).toBe("b");
    expect(body.point_mm[0]).toBeCloseTo(10.25, 9);
    expect(body.point_mm[1]).toBeCloseTo(4.25, 9);
    expect(body.point_mm[2]).toBeCloseTo(60, 9); // middle slice 30 * 2 mm
    expect(body.variant).toBe(13);
    expect(controller.lastMatch?.similarity).toBe(0.9);
  });

  it("navigates the target pane to the matched slice", async () => {
    const { controller } = setup({ onMatch: () => ({
      point_mm: [5, 5, 90], similarity: 1, mean_consistency_mm: 0, elapsed_seconds: 0, method: "cpm13",
    }) });
    expect(controller.target.sliceIndex).toBe(30);
    await controller.clickSource(0, 0);
    expect(controller.target.sliceIndex).toBe(45); // 90 mm / 2 mm
  });
});

describe("variant selector", () => {
  it("re-issues the last match with the new variant", async () => {
    const { controller, mock } = setup();
    await controller.clickSource(10, 10);
    expect(mock.matchCalls).toBe(1);
    controller.setVariant(3);
    await new Promise((r) => setTimeout(r, 0));
    expect(mock.matchCalls).toBe(2);
    const last = mock.requests[mock.requests.length - 1].body!;
    expect(last.variant).toBe(3);
    expect(last.point_mm).toEqual(controller.lastQueryMm);
  });

  it("does nothing without a previous query", () => {
    const { controller, mock } = setup();
    controller.setVariant(7);
    expect(mock.matchCalls).toBe(0);
  });
});

describe("single in-flight request", () => {
  it("newer clicks supersede pending ones", async () => {
    const { controller, mock } = setup({ manualRelease: true });
    const first = controller.clickSource(4, 4);
    const second = controller.clickSource(30, 30);
    mock.releaseAll();
    await Promise.all([first, second]);
    expect(mock.matchCalls).toBe(2);
    const cross = controller.targetCrosshair()!;
    // identical frames: the echoing mock puts the crosshair back on the click,
    // so the result must reflect the SECOND click only
    expect(cross.xDisplay).toBeCloseTo(30, 6);
    expect(controller.pending).toBe(false);
  });
});

describe("service failure", () => {
  it("shows a non-modal error and keeps pane state", async () => {
    const { controller } = setup({ matchStatus: 400 });
    const sliceBefore = controller.target.sliceIndex;
    await controller.clickSource(8, 8);
    expect(controller.errorMessage).toBe("scripted failure");
    expect(controller.lastMatch).toBeNull();
    expect(controller.target.sliceIndex).toBe(sliceBefore);
    expect(controller.pending).toBe(false);
  });
});

describe("pane controls", () => {
  it("clamps slice scrolling to the volume", () => {
    const { controller } = setup();
    controller.setSlice("source", -10);
    expect(controller.source.sliceIndex).toBe(0);
    controller.setSlice("source", 999);
    expect(controller.source.sliceIndex).toBe(59);
    controller.scrollSlice("source", 1);
    expect(controller.source.sliceIndex).toBe(59);
  });

  it("axis toggle resets to the middle slice and updates the slice url", () => {
    const { controller } = setup();
    controller.setAxis("source", "x");
    expect(controller.source.sliceIndex).toBe(20);
    expect(controller.sliceUrl("source")).toContain("axis=x");
    expect(controller.sliceUrl("source")).toContain("index=20");
  });

  it("window/level round-trips through slice query parameters", () => {
    const { controller } = setup();
    controller.setWindow("target", 100, 2000);
    const url = controller.sliceUrl("target");
    expect(url).toContain("wl_low=100");
    expect(url).toContain("wl_high=2000");
    controller.setWindow("target", 300, 300); // degenerate: ignored
    expect(controller.sliceUrl("target")).toContain("wl_high=2000");
  });

  it("full-range window is the default", () => {
    const { controller } = setup();
    const url = controller.sliceUrl("source");
    expect(url).toContain("wl_low=0");
    expect(url).toContain("wl_high=4096");
  });
});
