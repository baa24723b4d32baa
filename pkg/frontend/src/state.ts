/** Viewer state and interaction logic, free of DOM concerns.
 *
 * The controller owns two panes (source and target), issues matches on
 * source clicks with at most one request in flight (newer clicks supersede
 * older ones), navigates the target pane to the matched slice, and exposes
 * crosshair positions in display pixels. Rendering subscribes to change
 * notifications and reads the state snapshot.
 */

import { ApiClient } from "./api.js";
import {
  clampIndex,
  pixelToWorld,
  ringRadiiPx,
  sliceCount,
  worldToPixel,
} from "./geometry.js";
import type { Axis, MatchResponse, Variant, VolumeInfo } from "./types.js";

export const RING_RADIUS_MM = 10.0;

export interface PaneState {
  volume: VolumeInfo;
  axis: Axis;
  sliceIndex: number;
  wlLow: number;
  wlHigh: number;
  zoom: number;
}

export interface Crosshair {
  xDisplay: number;
  yDisplay: number;
  sliceIndex: number;
  onCurrentSlice: boolean;
  ringRxPx: number;
  ringRyPx: number;
}

export type PaneName = "source" | "target";

export function initialPane(volume: VolumeInfo, zoom: number = 2): PaneState {
  return {
    volume,
    axis: "z",
    sliceIndex: Math.floor(sliceCount(volume, "z") / 2),
    wlLow: 0,
    wlHigh: 4096,
    zoom,
  };
}

export class ViewerController {
  source: PaneState;
  target: PaneState;
  variant: Variant = 13;
  lastQueryMm: [number, number, number] | null = null;
  lastQueryPixel: { xDisplay: number; yDisplay: number; sliceIndex: number } | null = null;
  lastMatch: MatchResponse | null = null;
  pending = false;
  errorMessage: string | null = null;

  private inflight: AbortController | null = null;
  private requestSerial = 0;
  private listeners: Array<() => void> = [];

  constructor(
    private readonly api: ApiClient,
    sourceVolume: VolumeInfo,
    targetVolume: VolumeInfo,
    zoom: number = 2,
  ) {
    this.source = initialPane(sourceVolume, zoom);
    this.target = initialPane(targetVolume, zoom);
  }

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const l of this.listeners) l();
  }

  pane(name: PaneName): PaneState {
    return name === "source" ? this.source : this.target;
  }

  sliceUrl(name: PaneName): string {
    const p = this.pane(name);
    return this.api.sliceUrl({
      volume: p.volume.id,
      axis: p.axis,
      index: p.sliceIndex,
      wlLow: p.wlLow,
      wlHigh: p.wlHigh,
    });
  }

  setAxis(name: PaneName, axis: Axis): void {
    const p = this.pane(name);
    if (p.axis === axis) return;
    p.axis = axis;
    p.sliceIndex = Math.floor(sliceCount(p.volume, axis) / 2);
    this.notify();
  }

  setSlice(name: PaneName, index: number): void {
    const p = this.pane(name);
    p.sliceIndex = clampIndex(Math.round(index), sliceCount(p.volume, p.axis));
    this.notify();
  }

  scrollSlice(name: PaneName, delta: number): void {
    this.setSlice(name, this.pane(name).sliceIndex + delta);
  }

  setWindow(name: PaneName, low: number, high: number): void {
    const p = this.pane(name);
    if (!(high > low)) return; // ignore degenerate windows, keep state valid
    p.wlLow = low;
    p.wlHigh = high;
    this.notify();
  }

  setVariant(variant: Variant): void {
    if (this.variant === variant) return;
    this.variant = variant;
    this.notify();
    if (this.lastQueryMm) {
      void this.issueMatch(this.lastQueryMm);
    }
  }

  /** Query point of a click at display-pixel coordinates in the source pane. */
  clickToWorld(xDisplay: number, yDisplay: number): [number, number, number] {
    const p = this.source;
    return pixelToWorld(p.volume, p.axis, p.sliceIndex, xDisplay, yDisplay, p.zoom);
  }

  async clickSource(xDisplay: number, yDisplay: number): Promise<void> {
    const queryMm = this.clickToWorld(xDisplay, yDisplay);
    this.lastQueryPixel = { xDisplay, yDisplay, sliceIndex: this.source.sliceIndex };
    await this.issueMatch(queryMm);
  }

  async issueMatch(queryMm: [number, number, number]): Promise<void> {
    this.lastQueryMm = queryMm;
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const serial = ++this.requestSerial;
    this.pending = true;
    this.errorMessage = null;
    this.notify();
    try {
      const resp = await this.api.match(
        {
          source_id: this.source.volume.id,
          target_id: this.target.volume.id,
          point_mm: queryMm,
          variant: this.variant,
        },
        controller.signal,
      );
      if (serial !== this.requestSerial) return; // superseded by a newer click
      this.lastMatch = resp;
      const hit = worldToPixel(this.target.volume, this.target.axis, resp.point_mm, this.target.zoom);
      this.target.sliceIndex = hit.sliceIndex;
      this.pending = false;
      this.notify();
    } catch (err: any) {
      if (serial !== this.requestSerial || err?.name === "AbortError") return;
      this.pending = false;
      this.errorMessage = err?.message ?? String(err); // non-modal; panes keep their state
      this.notify();
    }
  }

  /** Crosshair for the matched point in the target pane, if any. */
  targetCrosshair(): Crosshair | null {
    if (!this.lastMatch) return null;
    const p = this.target;
    const hit = worldToPixel(p.volume, p.axis, this.lastMatch.point_mm, p.zoom);
    const [rx, ry] = ringRadiiPx(p.volume, p.axis, RING_RADIUS_MM, p.zoom);
    return {
      xDisplay: hit.xDisplay,
      yDisplay: hit.yDisplay,
      sliceIndex: hit.sliceIndex,
      onCurrentSlice: hit.sliceIndex === p.sliceIndex,
      ringRxPx: rx,
      ringRyPx: ry,
    };
  }

  /** Crosshair for the last clicked query in the source pane, if any. */
  sourceCrosshair(): Crosshair | null {
    if (!this.lastQueryMm) return null;
    const p = this.source;
    const hit = worldToPixel(p.volume, p.axis, this.lastQueryMm, p.zoom);
    return {
      xDisplay: hit.xDisplay,
      yDisplay: hit.yDisplay,
      sliceIndex: hit.sliceIndex,
      onCurrentSlice: hit.sliceIndex === p.sliceIndex,
      ringRxPx: 0,
      ringRyPx: 0,
    };
  }
}
