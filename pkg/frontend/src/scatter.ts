/** Scale projection points into a drawing viewport. */

import { ProjectionPoint } from "./api.js";

export interface ScaledPoint extends ProjectionPoint {
  px: number;
  py: number;
}

export function scalePoints(
  points: ProjectionPoint[],
  width: number,
  height: number,
  margin = 24,
): ScaledPoint[] {
  if (points.length === 0) return [];
  const xs = points.map((p) => p.x);
  const ys = points.map((p) => p.y);
  const minX = Math.min(...xs);
  const maxX = Math.max(...xs);
  const minY = Math.min(...ys);
  const maxY = Math.max(...ys);
  const spanX = maxX - minX || 1;
  const spanY = maxY - minY || 1;
  return points.map((p) => ({
    ...p,
    px: margin + ((p.x - minX) / spanX) * (width - 2 * margin),
    py: margin + ((p.y - minY) / spanY) * (height - 2 * margin),
  }));
}
