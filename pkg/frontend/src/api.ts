/** Typed client for the matching service; the fetch implementation is
 * injectable so tests can script the whole HTTP contract. */

import {
  Axis,
  MatchRequest,
  MatchResponse,
  VolumeInfo,
  parseMatchResponse,
  parseVolumeInfo,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

export interface SliceParams {
  volume: string;
  axis: Axis;
  index: number;
  wlLow: number;
  wlHigh: number;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  sliceUrl(p: SliceParams): string {
    const params = new URLSearchParams({
      volume: p.volume,
      axis: p.axis,
      index: String(p.index),
      wl_low: String(p.wlLow),
      wl_high: String(p.wlHigh),
    });
    return `${this.baseUrl}/slice?${params.toString()}`;
  }

  async volumes(): Promise<VolumeInfo[]> {
    const resp = await this.fetchFn(`${this.baseUrl}/volumes`);
    if (!resp.ok) throw new ApiError(resp.status, `listing volumes failed (${resp.status})`);
    const doc = await resp.json();
    if (!Array.isArray(doc)) throw new ApiError(500, "volumes: expected an array");
    return doc.map(parseVolumeInfo);
  }

  async match(req: MatchRequest, signal?: AbortSignal): Promise<MatchResponse> {
    const resp = await this.fetchFn(`${this.baseUrl}/match`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(req),
      signal,
    });
    if (!resp.ok) {
      let detail = `match failed (${resp.status})`;
      try {
        const doc = await resp.json();
        if (doc && typeof doc.detail === "string") detail = doc.detail;
      } catch {
        // keep the generic message when the body is not JSON
      }
      throw new ApiError(resp.status, detail);
    }
    return parseMatchResponse(await resp.json());
  }
}
