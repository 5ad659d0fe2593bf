import { describe, expect, it } from "vitest";

import { OffParseError, parseOff } from "../src/off.js";

const TRIANGLE = `OFF
3 1 0
0 0 0
1 0 0
0 1 0
3 0 1 2
`;

describe("parseOff", () => {
  it("parses a minimal triangle", () => {
    const mesh = parseOff(TRIANGLE);
    expect(mesh.vertices).toEqual([
      [0, 0, 0],
      [1, 0, 0],
      [0, 1, 0],
    ]);
    expect(mesh.faces).toEqual([[0, 1, 2]]);
  });

  it("accepts comments and blank lines", () => {
    const text = "OFF\n# a comment\n\n3 1 0\n0 0 0\n1 0 0 # trailing\n0 1 0\n3 0 1 2\n";
    expect(parseOff(text).faces).toHaveLength(1);
  });

  it("accepts the merged header form", () => {
    const text = "OFF 3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";
    expect(parseOff(text).vertices).toHaveLength(3);
  });

  it("fans quads into triangles", () => {
    const text = `OFF
4 1 0
0 0 0
1 0 0
1 1 0
0 1 0
4 0 1 2 3
`;
    const mesh = parseOff(text);
    expect(mesh.faces).toEqual([
      [0, 1, 2],
      [0, 2, 3],
    ]);
  });

  it("rejects empty input", () => {
    expect(() => parseOff("")).toThrow(OffParseError);
  });

  it("rejects a missing header", () => {
    expect(() => parseOff("3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n")).toThrow(OffParseError);
  });

  it("rejects out-of-range vertex indices", () => {
    const text = "OFF\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n3 0 1 9\n";
    expect(() => parseOff(text)).toThrow(OffParseError);
  });

  it("rejects truncated files", () => {
    expect(() => parseOff("OFF\n3 1 0\n0 0 0\n1 0 0\n")).toThrow(OffParseError);
  });

  it("rejects meshes without faces", () => {
    expect(() => parseOff("OFF\n3 0 0\n0 0 0\n1 0 0\n0 1 0\n")).toThrow(OffParseError);
  });
});
