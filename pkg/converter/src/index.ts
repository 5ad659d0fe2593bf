export { Mesh, OffParseError, Vec3, parseOff } from "./off.js";
export { Rng, meshSeed } from "./rng.js";
export { cumulativeAreas, sampleFaceCounts, samplePoints, triangleArea } from "./sampler.js";
export { DegenerateCloudError, normalizeToUnitSphere } from "./normalize.js";
export { encodeBinary, encodeText } from "./formats.js";
export { Manifest, ManifestEntry, convert } from "./convert.js";
