/**
 * Directory conversion: an OFF tree laid out as <class>/[train|test/]*.off
 * becomes a point-cloud dataset with the same manifest schema the
 * consumer library's synthetic generator writes.
 *
 * Mesh i (counting over all accepted meshes in deterministic order) is
 * sampled with an independent generator seeded seed XOR i. Malformed OFF
 * files are skipped with a warning; a class that ends up with no meshes
 * at all is an error.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { encodeBinary, encodeText } from "./formats.js";
import { normalizeToUnitSphere } from "./normalize.js";
import { OffParseError, parseOff } from "./off.js";
import { Rng, meshSeed } from "./rng.js";
import { samplePoints } from "./sampler.js";

export interface ConvertOptions {
  inputDir: string;
  outputDir: string;
  pointsPerCloud: number;
  seed: number;
  format: "text" | "binary";
  log?: (message: string) => void;
}

export interface ManifestEntry {
  file: string;
  label: number;
}

export interface Manifest {
  schema_version: number;
  classes: string[];
  points_per_cloud: number;
  noise_sigma: number;
  seed: number;
  counts: { train: Record<string, number>; test: Record<string, number> };
  train: ManifestEntry[];
  test: ManifestEntry[];
}

interface MeshJob {
  classIndex: number;
  className: string;
  split: "train" | "test";
  path: string;
}

function listOffFiles(dir: string): string[] {
  return fs
    .readdirSync(dir, { withFileTypes: true })
    .filter((e) => e.isFile() && e.name.toLowerCase().endsWith(".off"))
    .map((e) => path.join(dir, e.name))
    .sort();
}

function collectJobs(inputDir: string): { classes: string[]; jobs: MeshJob[] } {
  const classes = fs
    .readdirSync(inputDir, { withFileTypes: true })
    .filter((e) => e.isDirectory())
    .map((e) => e.name)
    .sort();
  if (classes.length === 0) {
    throw new Error(`no class subdirectories under ${inputDir}`);
  }
  const jobs: MeshJob[] = [];
  classes.forEach((className, classIndex) => {
    const classDir = path.join(inputDir, className);
    for (const split of ["train", "test"] as const) {
      const splitDir = path.join(classDir, split);
      if (fs.existsSync(splitDir) && fs.statSync(splitDir).isDirectory()) {
        for (const file of listOffFiles(splitDir)) {
          jobs.push({ classIndex, className, split, path: file });
        }
      }
    }
    for (const file of listOffFiles(classDir)) {
      jobs.push({ classIndex, className, split: "train", path: file });
    }
  });
  return { classes, jobs };
}

export function convert(options: ConvertOptions): Manifest {
  const log = options.log ?? ((m) => console.warn(m));
  const { classes, jobs } = collectJobs(options.inputDir);
  const manifest: Manifest = {
    schema_version: 1,
    classes,
    points_per_cloud: options.pointsPerCloud,
    noise_sigma: 0,
    seed: options.seed,
    counts: { train: {}, test: {} },
    train: [],
    test: [],
  };
  for (const c of classes) {
    manifest.counts.train[c] = 0;
    manifest.counts.test[c] = 0;
  }

  const suffix = options.format === "binary" ? ".pcb" : ".pct";
  const accepted: Record<string, number> = {};
  let index = 0;
  for (const job of jobs) {
    let points;
    try {
      const mesh = parseOff(fs.readFileSync(job.path, "utf-8"));
      const rng = new Rng(meshSeed(options.seed, index));
      points = normalizeToUnitSphere(samplePoints(mesh, options.pointsPerCloud, rng));
    } catch (err) {
      if (err instanceof OffParseError) {
        log(`warning: skipping ${job.path}: ${err.message}`);
        index += 1;
        continue;
      }
      throw err;
    }
    const splitDir = path.join(options.outputDir, job.split);
    fs.mkdirSync(splitDir, { recursive: true });
    const stem = path.basename(job.path).replace(/\.off$/i, "");
    const name = `${job.className}_${stem}${suffix}`;
    const target = path.join(splitDir, name);
    if (options.format === "binary") {
      fs.writeFileSync(target, encodeBinary(points, job.classIndex));
    } else {
      fs.writeFileSync(target, encodeText(points, job.classIndex));
    }
    manifest[job.split].push({ file: `${job.split}/${name}`, label: job.classIndex });
    manifest.counts[job.split][job.className] += 1;
    accepted[job.className] = (accepted[job.className] ?? 0) + 1;
    index += 1;
  }

  for (const c of classes) {
    if (!accepted[c]) {
      throw new Error(`class directory ${c} produced no usable meshes`);
    }
  }

  fs.mkdirSync(options.outputDir, { recursive: true });
  fs.writeFileSync(
    path.join(options.outputDir, "manifest.json"),
    JSON.stringify(manifest, null, 2) + "\n",
  );
  return manifest;
}
