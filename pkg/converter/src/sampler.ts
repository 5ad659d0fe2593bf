/**
 * Uniform surface sampling: faces drawn with probability proportional to
 * triangle area, points placed with uniform barycentric coordinates.
 */

import { Mesh, Vec3 } from "./off.js";
import { Rng } from "./rng.js";

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

export function triangleArea(a: Vec3, b: Vec3, c: Vec3): number {
  return 0.5 * norm(cross(sub(b, a), sub(c, a)));
}

/** Cumulative area table for face selection by one uniform draw. */
export function cumulativeAreas(mesh: Mesh): number[] {
  const cumulative: number[] = [];
  let total = 0;
  for (const [i, j, k] of mesh.faces) {
    total += triangleArea(mesh.vertices[i], mesh.vertices[j], mesh.vertices[k]);
    cumulative.push(total);
  }
  if (total <= 0) throw new Error("mesh has zero total surface area");
  return cumulative;
}

function pickFace(cumulative: number[], u: number): number {
  const target = u * cumulative[cumulative.length - 1];
  let lo = 0;
  let hi = cumulative.length - 1;
  while (lo < hi) {
    const mid = (lo + hi) >> 1;
    if (cumulative[mid] <= target) lo = mid + 1;
    else hi = mid;
  }
  return lo;
}

/**
 * n surface points. Draw order per point is fixed (face, r1, r2) so the
 * output is a pure function of the rng seed.
 */
export function samplePoints(mesh: Mesh, n: number, rng: Rng): Vec3[] {
  const cumulative = cumulativeAreas(mesh);
  const points: Vec3[] = [];
  for (let s = 0; s < n; s++) {
    const face = mesh.faces[pickFace(cumulative, rng.uniform())];
    const [a, b, c] = face.map((i) => mesh.vertices[i]) as [Vec3, Vec3, Vec3];
    let r1 = rng.uniform();
    let r2 = rng.uniform();
    if (r1 + r2 > 1) {
      r1 = 1 - r1;
      r2 = 1 - r2;
    }
    points.push([
      a[0] + r1 * (b[0] - a[0]) + r2 * (c[0] - a[0]),
      a[1] + r1 * (b[1] - a[1]) + r2 * (c[1] - a[1]),
      a[2] + r1 * (b[2] - a[2]) + r2 * (c[2] - a[2]),
    ]);
  }
  return points;
}

/** Counts of sampled points per face (diagnostic for area weighting). */
export function sampleFaceCounts(mesh: Mesh, n: number, rng: Rng): number[] {
  const cumulative = cumulativeAreas(mesh);
  const counts = new Array(mesh.faces.length).fill(0);
  for (let s = 0; s < n; s++) {
    counts[pickFace(cumulative, rng.uniform())] += 1;
    rng.uniform();
    rng.uniform();
  }
  return counts;
}
