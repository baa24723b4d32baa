/** Pane geometry: slice-image pixels <-> voxel indices <-> world millimeters.
 *
 * Slice images follow the service contract: for a given slice axis the PNG
 * columns run along the first remaining volume axis and the rows along the
 * second, both ascending. Pixel centers sit on voxel centers; a pane may
 * display the image magnified by an integer zoom, with display-pixel (0,0)
 * covering the top-left zoom x zoom block.
 */

import type { Axis, VolumeInfo } from "./types.js";

export const AXIS_INDEX: Record<Axis, number> = { x: 0, y: 1, z: 2 };

/** [column axis, row axis] of the slice image for a given slice axis. */
export function inPlaneAxes(axis: Axis): [number, number] {
  if (axis === "z") return [0, 1];
  if (axis === "y") return [0, 2];
  return [1, 2];
}

export function sliceCount(volume: VolumeInfo, axis: Axis): number {
  return volume.dims[AXIS_INDEX[axis]];
}

export function sliceSize(volume: VolumeInfo, axis: Axis): [number, number] {
  const [c, r] = inPlaneAxes(axis);
  return [volume.dims[c], volume.dims[r]];
}

export function voxelToWorld(volume: VolumeInfo, voxel: [number, number, number]): [number, number, number] {
  const { origin_mm, axes } = volume.frame;
  const s = volume.spacing_mm;
  const out: [number, number, number] = [0, 0, 0];
  for (let i = 0; i < 3; i++) {
    out[i] = origin_mm[i] + axes[i][0] * s[0] * voxel[0] + axes[i][1] * s[1] * voxel[1] + axes[i][2] * s[2] * voxel[2];
  }
  return out;
}

export function worldToVoxel(volume: VolumeInfo, point: [number, number, number]): [number, number, number] {
  const { origin_mm, axes } = volume.frame;
  const s = volume.spacing_mm;
  const rel = [point[0] - origin_mm[0], point[1] - origin_mm[1], point[2] - origin_mm[2]];
  const out: [number, number, number] = [0, 0, 0];
  for (let j = 0; j < 3; j++) {
    out[j] = (rel[0] * axes[0][j] + rel[1] * axes[1][j] + rel[2] * axes[2][j]) / s[j];
  }
  return out;
}

/** Continuous image coordinates (col, row) of a display pixel under zoom. */
export function displayToImage(xDisplay: number, yDisplay: number, zoom: number): [number, number] {
  return [(xDisplay + 0.5) / zoom - 0.5, (yDisplay + 0.5) / zoom - 0.5];
}

export function imageToDisplay(col: number, row: number, zoom: number): [number, number] {
  return [(col + 0.5) * zoom - 0.5, (row + 0.5) * zoom - 0.5];
}

/** World point of a display pixel on the current slice of a pane. */
export function pixelToWorld(
  volume: VolumeInfo,
  axis: Axis,
  sliceIndex: number,
  xDisplay: number,
  yDisplay: number,
  zoom: number,
): [number, number, number] {
  const [col, row] = displayToImage(xDisplay, yDisplay, zoom);
  const [ca, ra] = inPlaneAxes(axis);
  const voxel: [number, number, number] = [0, 0, 0];
  voxel[AXIS_INDEX[axis]] = sliceIndex;
  voxel[ca] = col;
  voxel[ra] = row;
  return voxelToWorld(volume, voxel);
}

export interface PanePoint {
  xDisplay: number;
  yDisplay: number;
  sliceIndex: number; // nearest slice containing the point
  inPlane: boolean; // true when the in-plane position lies inside the image
}

/** Display-pixel position of a world point in a pane (plus its slice). */
export function worldToPixel(
  volume: VolumeInfo,
  axis: Axis,
  point: [number, number, number],
  zoom: number,
): PanePoint {
  const voxel = worldToVoxel(volume, point);
  const [ca, ra] = inPlaneAxes(axis);
  const ai = AXIS_INDEX[axis];
  const [xDisplay, yDisplay] = imageToDisplay(voxel[ca], voxel[ra], zoom);
  const sliceIndex = clampIndex(Math.round(voxel[ai]), volume.dims[ai]);
  const [w, h] = sliceSize(volume, axis);
  const inPlane = voxel[ca] >= -0.5 && voxel[ca] < w - 0.5 && voxel[ra] >= -0.5 && voxel[ra] < h - 0.5;
  return { xDisplay, yDisplay, sliceIndex, inPlane };
}

/** Display-pixel radii of a world-millimeter ring around a point in a pane. */
export function ringRadiiPx(volume: VolumeInfo, axis: Axis, radiusMm: number, zoom: number): [number, number] {
  const [ca, ra] = inPlaneAxes(axis);
  return [(radiusMm / volume.spacing_mm[ca]) * zoom, (radiusMm / volume.spacing_mm[ra]) * zoom];
}

export function clampIndex(index: number, count: number): number {
  if (index < 0) return 0;
  if (index >= count) return count - 1;
  return index;
}
