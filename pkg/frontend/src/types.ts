export type Axis = "x" | "y" | "z";

export type Variant = 1 | 3 | 7 | 13;

export interface VolumeFrame {
  origin_mm: [number, number, number];
  /** Row-major 3x3; column j is the world direction of voxel axis j. */
  axes: number[][];
  label: string;
}

export interface VolumeInfo {
  id: string;
  dims: [number, number, number];
  spacing_mm: [number, number, number];
  frame: VolumeFrame;
}

export interface MatchRequest {
  source_id: string;
  target_id: string;
  point_mm: [number, number, number];
  variant: Variant;
}

export interface MatchResponse {
  point_mm: [number, number, number];
  similarity: number;
  mean_consistency_mm: number | null;
  elapsed_seconds: number;
  method: string;
}

export function asVec3(raw: unknown, what: string): [number, number, number] {
  if (!Array.isArray(raw) || raw.length !== 3 || raw.some((v) => typeof v !== "number" || !isFinite(v))) {
    throw new Error(`${what}: expected 3 finite numbers`);
  }
  return [raw[0], raw[1], raw[2]];
}

export function parseVolumeInfo(raw: any): VolumeInfo {
  if (typeof raw !== "object" || raw === null || typeof raw.id !== "string") {
    throw new Error("volume entry: expected an object with an id");
  }
  const frame = raw.frame ?? {};
  const axes = frame.axes;
  if (!Array.isArray(axes) || axes.length !== 3 || axes.some((r: any) => !Array.isArray(r) || r.length !== 3)) {
    throw new Error(`volume ${raw.id}: frame.axes must be 3x3`);
  }
  return {
    id: raw.id,
    dims: asVec3(raw.dims, `volume ${raw.id}: dims`),
    spacing_mm: asVec3(raw.spacing_mm, `volume ${raw.id}: spacing_mm`),
    frame: {
      origin_mm: asVec3(frame.origin_mm, `volume ${raw.id}: frame.origin_mm`),
      axes: axes as number[][],
      label: typeof frame.label === "string" ? frame.label : "unknown",
    },
  };
}

export function parseMatchResponse(raw: any): MatchResponse {
  if (typeof raw !== "object" || raw === null) throw new Error("match response: expected an object");
  return {
    point_mm: asVec3(raw.point_mm, "match response point_mm"),
    similarity: Number(raw.similarity),
    mean_consistency_mm: raw.mean_consistency_mm === null ? null : Number(raw.mean_consistency_mm),
    elapsed_seconds: Number(raw.elapsed_seconds),
    method: String(raw.method ?? ""),
  };
}
