/**
 * OFF mesh parsing (the ModelNet40 distribution format).
 *
 * Accepts the "OFF" header either on its own line or merged with the
 * count line ("OFF 8 6 0"), skips blank and comment lines, and fans any
 * polygon with more than three vertices into triangles.
 */

export type Vec3 = [number, number, number];

export interface Mesh {
  vertices: Vec3[];
  /** Triangles as vertex-index triples (after fan triangulation). */
  faces: [number, number, number][];
}

export class OffParseError extends Error {}

function tokenize(text: string): string[] {
  const tokens: string[] = [];
  for (const rawLine of text.split(/\r?\n/)) {
    const line = rawLine.replace(/#.*$/, "").trim();
    if (line.length === 0) continue;
    tokens.push(...line.split(/\s+/));
  }
  return tokens;
}

export function parseOff(text: string): Mesh {
  const tokens = tokenize(text);
  if (tokens.length === 0) throw new OffParseError("empty file");
  let cursor = 0;
  const head = tokens[cursor];
  if (head === "OFF") {
    cursor += 1;
  } else if (head.startsWith("OFF")) {
    // merged header: "OFF8" style -- re-split the numeric tail
    tokens.splice(cursor, 1, "OFF", head.slice(3));
    cursor += 1;
  } else {
    throw new OffParseError(`missing OFF header, found ${head!}`);
  }

  const readInt = (what: string): number => {
    const tok = tokens[cursor++];
    if (tok === undefined) throw new OffParseError(`unexpected end of file reading ${what}`);
    const value = Number(tok);
    if (!Number.isInteger(value) || value < 0) {
      throw new OffParseError(`bad ${what}: ${tok}`);
    }
    return value;
  };
  const readFloat = (what: string): number => {
    const tok = tokens[cursor++];
    if (tok === undefined) throw new OffParseError(`unexpected end of file reading ${what}`);
    const value = Number(tok);
    if (!Number.isFinite(value)) throw new OffParseError(`bad ${what}: ${tok}`);
    return value;
  };

  const nVertices = readInt("vertex count");
  const nFaces = readInt("face count");
  readInt("edge count");
  if (nVertices < 3 || nFaces < 1) {
    throw new OffParseError(`need >= 3 vertices and >= 1 face, got ${nVertices}/${nFaces}`);
  }

  const vertices: Vec3[] = [];
  for (let i = 0; i < nVertices; i++) {
    vertices.push([readFloat("x"), readFloat("y"), readFloat("z")]);
  }

  const faces: [number, number, number][] = [];
  for (let i = 0; i < nFaces; i++) {
    const arity = readInt("face arity");
    if (arity < 3) throw new OffParseError(`face ${i} has arity ${arity}`);
    const idx: number[] = [];
    for (let j = 0; j < arity; j++) {
      const v = readInt("vertex index");
      if (v >= nVertices) throw new OffParseError(`face ${i} references vertex ${v} of ${nVertices}`);
      idx.push(v);
    }
    for (let j = 1; j + 1 < idx.length; j++) {
      faces.push([idx[0], idx[j], idx[j + 1]]);
    }
  }
  return { vertices, faces };
}
