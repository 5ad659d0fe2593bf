/**
 * The consumer library's point-cloud file formats.
 *
 * Text: header "pc <m> <label>" then one "x y z" line per point, floats
 * at 9 significant digits (round-trips within 5e-10 per coordinate, well
 * inside the library's 1e-6 text tolerance and tight enough to keep its
 * normalization invariants at 1e-9).
 *
 * Binary: magic "PCB1", little-endian uint32 count, int32 label, then
 * m*3 little-endian float32 coordinates.
 */

import { Vec3 } from "./off.js";

function fmt(x: number): string {
  return x.toPrecision(9);
}

export function encodeText(points: Vec3[], label: number | null): string {
  const lines = [`pc ${points.length} ${label === null ? -1 : label}`];
  for (const [x, y, z] of points) {
    lines.push(`${fmt(x)} ${fmt(y)} ${fmt(z)}`);
  }
  return lines.join("\n") + "\n";
}

export function encodeBinary(points: Vec3[], label: number | null): Buffer {
  const buf = Buffer.alloc(4 + 4 + 4 + points.length * 12);
  buf.write("PCB1", 0, "ascii");
  buf.writeUInt32LE(points.length, 4);
  buf.writeInt32LE(label === null ? -1 : label, 8);
  let offset = 12;
  for (const [x, y, z] of points) {
    buf.writeFloatLE(x, offset);
    buf.writeFloatLE(y, offset + 4);
    buf.writeFloatLE(z, offset + 8);
    offset += 12;
  }
  return buf;
}
