#!/usr/bin/env node
/**
 * off2cloud convert --in <dir> --out <dir> --points N --seed S
 *                   [--format text|binary]
 *
 * Exit codes: 0 success, 1 usage error, 2 conversion failure.
 */

import { parseArgs } from "node:util";

import { convert } from "./convert.js";

function usage(stream: NodeJS.WriteStream): void {
  stream.write(
    "usage: off2cloud convert --in <dir> --out <dir> [--points N] [--seed S] [--format text|binary]\n",
  );
}

export function main(argv: string[]): number {
  if (argv.length === 0 || argv[0] !== "convert") {
    usage(process.stderr);
    return 1;
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        in: { type: "string" },
        out: { type: "string" },
        points: { type: "string", default: "2048" },
        seed: { type: "string", default: "0" },
        format: { type: "string", default: "text" },
      },
    }));
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    usage(process.stderr);
    return 1;
  }
  if (!values.in || !values.out) {
    process.stderr.write("error: --in and --out are required\n");
    usage(process.stderr);
    return 1;
  }
  const points = Number(values.points);
  const seed = Number(values.seed);
  if (!Number.isInteger(points) || points < 1 || !Number.isInteger(seed) || seed < 0) {
    process.stderr.write("error: --points must be a positive integer and --seed a nonnegative integer\n");
    return 1;
  }
  if (values.format !== "text" && values.format !== "binary") {
    process.stderr.write(`error: unknown format ${values.format}\n`);
    return 1;
  }
  try {
    const manifest = convert({
      inputDir: values.in,
      outputDir: values.out,
      pointsPerCloud: points,
      seed,
      format: values.format,
    });
    const total = manifest.train.length + manifest.test.length;
    process.stdout.write(
      `converted ${total} meshes across ${manifest.classes.length} classes into ${values.out}\n`,
    );
    return 0;
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 2;
  }
}

process.exit(main(process.argv.slice(2)));
