/**
 * Reader for experiment CSV reports.
 *
 * The file starts with `# key=value` comment lines carrying the schema
 * version and config hash, followed by a header row and one data row per
 * (sample, point). Any deviation from the expected schema throws a
 * SchemaError naming the problem.
 */

export const SUPPORTED_FORMAT_VERSION = "1";

export const REQUIRED_COLUMNS = [
  "sample_index",
  "alpha",
  "point",
  "corank",
  "tb_symbol",
  "classification",
  "margin",
  "pass",
] as const;

export class SchemaError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "SchemaError";
  }
}

export interface ReportRow {
  sampleIndex: number;
  alpha: number[];
  point: number[];
  corank: number;
  tbSymbol: number[];
  classification: string;
  margin: number;
  pass: boolean;
}

export interface ReportCsv {
  formatVersion: string;
  configHash: string;
  kind: string;
  rows: ReportRow[];
}

function splitCsvLine(line: string): string[] {
  // the writer never quotes; a plain split is the whole grammar
  return line.split(",");
}

function parseFloatList(cell: string): number[] {
  if (cell.trim() === "") return [];
  return cell.split(";").map((s) => {
    const v = Number(s);
    if (!Number.isFinite(v)) {
      throw new SchemaError(`expected a number list, got ${JSON.stringify(cell)}`);
    }
    return v;
  });
}

function parseIntList(cell: string): number[] {
  if (cell.trim() === "") return [];
  return cell.split(";").map((s) => {
    const v = Number(s);
    if (!Number.isInteger(v)) {
      throw new SchemaError(`expected an integer list, got ${JSON.stringify(cell)}`);
    }
    return v;
  });
}

export function parseReportCsv(text: string): ReportCsv {
  const lines = text.split(/\r?\n/);
  const meta: Record<string, string> = {};
  let i = 0;
  for (; i < lines.length && lines[i].startsWith("#"); i++) {
    const m = lines[i].slice(1).trim().match(/^([A-Za-z_]+)=(.*)$/);
    if (m) meta[m[1]] = m[2];
  }
  const version = meta["format_version"];
  if (version === undefined) {
    throw new SchemaError("missing format_version header comment");
  }
  if (version !== SUPPORTED_FORMAT_VERSION) {
    throw new SchemaError(
      `unsupported format_version ${version} (supported: ${SUPPORTED_FORMAT_VERSION})`,
    );
  }

  if (i >= lines.length || lines[i].trim() === "") {
    throw new SchemaError("missing column header row");
  }
  const header = splitCsvLine(lines[i]);
  i += 1;
  const col: Record<string, number> = {};
  header.forEach((name, idx) => (col[name] = idx));
  for (const name of REQUIRED_COLUMNS) {
    if (!(name in col)) {
      throw new SchemaError(`missing required column ${JSON.stringify(name)}`);
    }
  }

  const rows: ReportRow[] = [];
  for (; i < lines.length; i++) {
    const line = lines[i];
    if (line.trim() === "") continue;
    const cells = splitCsvLine(line);
    if (cells.length < header.length) {
      throw new SchemaError(`row ${i + 1} has ${cells.length} cells, expected ${header.length}`);
    }
    const sampleIndex = Number(cells[col["sample_index"]]);
    const corank = Number(cells[col["corank"]]);
    const margin = Number(cells[col["margin"]]);
    if (!Number.isInteger(sampleIndex)) {
      throw new SchemaError(`row ${i + 1}: bad sample_index`);
    }
    if (!Number.isFinite(margin) && cells[col["margin"]] !== "inf") {
      throw new SchemaError(`row ${i + 1}: bad margin`);
    }
    rows.push({
      sampleIndex,
      alpha: parseFloatList(cells[col["alpha"]]),
      point: parseFloatList(cells[col["point"]]),
      corank,
      tbSymbol: parseIntList(cells[col["tb_symbol"]]),
      classification: cells[col["classification"]],
      margin,
      pass: cells[col["pass"]] === "true",
    });
  }

  return {
    formatVersion: version,
    configHash: meta["config_hash"] ?? "",
    kind: meta["kind"] ?? "",
    rows,
  };
}

export function groupBySample(rows: ReportRow[]): Map<number, ReportRow[]> {
  const groups = new Map<number, ReportRow[]>();
  for (const row of rows) {
    const bucket = groups.get(row.sampleIndex);
    if (bucket) bucket.push(row);
    else groups.set(row.sampleIndex, [row]);
  }
  return new Map([...groups.entries()].sort((a, b) => a[0] - b[0]));
}
