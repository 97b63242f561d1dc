#!/usr/bin/env node
/**
 * figures render --kind <kind> --in <report.csv> --out <figure.svg>
 *
 * Exit codes: 0 success, 1 usage/IO error, 2 schema mismatch.
 */

import { readFileSync, writeFileSync } from "node:fs";
import { parseArgs } from "node:util";

import { parseReportCsv, SchemaError } from "./csv.js";
import { FigureKind, renderFigure } from "./figures.js";

const KINDS: FigureKind[] = ["singular_curve", "margin_histogram", "double_point_map"];

export function runCli(argv: string[]): number {
  if (argv[0] !== "render") {
    process.stderr.write("usage: figures render --kind <kind> --in <csv> --out <svg>\n");
    return 1;
  }
  let values: { kind?: string; in?: string; out?: string; "marker-size"?: string };
  try {
    ({ values } = parseArgs({
      args: argv.slice(1),
      options: {
        kind: { type: "string" },
        in: { type: "string" },
        out: { type: "string" },
        "marker-size": { type: "string" },
      },
    }));
  } catch (err) {
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }
  const { kind, in: input, out } = values;
  if (!kind || !input || !out) {
    process.stderr.write("error: --kind, --in, and --out are all required\n");
    return 1;
  }
  if (!KINDS.includes(kind as FigureKind)) {
    process.stderr.write(`error: unknown kind ${kind}; pick one of ${KINDS.join(", ")}\n`);
    return 1;
  }

  let textContent: string;
  try {
    textContent = readFileSync(input, "utf-8");
  } catch (err) {
    process.stderr.write(`error: cannot read ${input}: ${(err as Error).message}\n`);
    return 1;
  }

  let svg: string;
  try {
    const csv = parseReportCsv(textContent);
    const options = values["marker-size"]
      ? { markerSize: Number(values["marker-size"]) }
      : {};
    svg = renderFigure(kind as FigureKind, csv, options);
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`schema error: ${err.message}\n`);
      return 2;
    }
    process.stderr.write(`error: ${(err as Error).message}\n`);
    return 1;
  }

  try {
    writeFileSync(out, svg, "utf-8");
  } catch (err) {
    process.stderr.write(`error: cannot write ${out}: ${(err as Error).message}\n`);
    return 1;
  }
  return 0;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");

if (invokedDirectly) {
  process.exit(runCli(process.argv.slice(2)));
}
