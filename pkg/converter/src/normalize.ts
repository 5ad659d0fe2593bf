/**
 * Unit-sphere normalization replicating the consumer library's semantics:
 * subtract the centroid, then scale so the farthest point has norm 1.
 * All arithmetic is IEEE float64.
 */

import { Vec3 } from "./off.js";

export class DegenerateCloudError extends Error {}

export function normalizeToUnitSphere(points: Vec3[]): Vec3[] {
  const n = points.length;
  let cx = 0;
  let cy = 0;
  let cz = 0;
  for (const [x, y, z] of points) {
    cx += x;
    cy += y;
    cz += z;
  }
  cx /= n;
  cy /= n;
  cz /= n;
  const centered: Vec3[] = points.map(([x, y, z]) => [x - cx, y - cy, z - cz]);
  let radius = 0;
  for (const [x, y, z] of centered) {
    const r = Math.sqrt(x * x + y * y + z * z);
    if (r > radius) radius = r;
  }
  if (radius === 0) throw new DegenerateCloudError("all points coincide");
  return centered.map(([x, y, z]) => [x / radius, y / radius, z / radius]);
}
