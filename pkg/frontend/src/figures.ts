/**
 * Figure rendering from parsed CSV reports.
 *
 * Three kinds:
 *  - singular_curve:    per-sample panels; fold points drawn as a dotted
 *                       curve, cusps and cross-caps as distinct markers
 *  - margin_histogram:  distribution of log10 classification margins
 *  - double_point_map:  preimages of double points, transverse vs tangential
 *
 * Rendering is a pure function of (csv, options): same input, same bytes.
 */

import { groupBySample, ReportCsv, ReportRow } from "./csv.js";
import {
  circle,
  crossMarker,
  fmt,
  line,
  makeViewport,
  rect,
  svgDocument,
  text,
} from "./svg.js";

export type FigureKind = "singular_curve" | "margin_histogram" | "double_point_map";

export interface FigureOptions {
  markerSize?: number;
  panelSize?: number;
  columns?: number;
  bins?: number;
}

const FOLD_COLOR = "#4575b4";
const CUSP_COLOR = "#d73027";
const CROSS_CAP_COLOR = "#fc8d59";
const OTHER_COLOR = "#777777";
const TANGENT_COLOR = "#a50f15";

function pointBounds(rows: ReportRow[]) {
  let xMin = Infinity, xMax = -Infinity, yMin = Infinity, yMax = -Infinity;
  for (const r of rows) {
    if (r.point.length < 2) continue;
    xMin = Math.min(xMin, r.point[0]);
    xMax = Math.max(xMax, r.point[0]);
    yMin = Math.min(yMin, r.point[1]);
    yMax = Math.max(yMax, r.point[1]);
  }
  if (!Number.isFinite(xMin)) {
    return { xMin: -1, xMax: 1, yMin: -1, yMax: 1 };
  }
  const padX = 0.05 * (xMax - xMin || 1);
  const padY = 0.05 * (yMax - yMin || 1);
  return { xMin: xMin - padX, xMax: xMax + padX, yMin: yMin - padY, yMax: yMax + padY };
}

function isSingularRow(r: ReportRow): boolean {
  return !r.classification.startsWith("double_point");
}

export function renderSingularCurve(csv: ReportCsv, options: FigureOptions = {}): string {
  const panel = options.panelSize ?? 220;
  const marker = options.markerSize ?? 5;
  const pad = 34;
  const groups = [...groupBySample(csv.rows.filter(isSingularRow)).entries()];
  const columns = options.columns ?? Math.max(1, Math.min(5, Math.ceil(Math.sqrt(groups.length || 1))));
  const rowsCount = Math.max(1, Math.ceil((groups.length || 1) / columns));
  const width = columns * (panel + pad) + pad;
  const height = rowsCount * (panel + pad) + pad;

  const body: string[] = [];
  body.push(rect(0, 0, width, height, { fill: "white" }));
  groups.forEach(([sampleIndex, rows], gi) => {
    const cx = pad + (gi % columns) * (panel + pad);
    const cy = pad + Math.floor(gi / columns) * (panel + pad);
    const vp = makeViewport(pointBounds(rows), {
      left: cx, top: cy, width: panel, height: panel,
    });
    body.push(rect(cx, cy, panel, panel, {
      fill: "none", stroke: "#999999", "stroke-width": 1, class: "panel",
    }));
    let cusps = 0;
    for (const r of rows) {
      if (r.point.length < 2) continue;
      const px = vp.x(r.point[0]);
      const py = vp.y(r.point[1]);
      if (r.classification === "cusp") {
        cusps += 1;
        body.push(crossMarker(px, py, marker, "cusp-marker", CUSP_COLOR));
      } else if (r.classification === "fold") {
        body.push(circle(px, py, marker * 0.35, "fold-point", FOLD_COLOR));
      } else if (r.classification === "cross_cap") {
        body.push(crossMarker(px, py, marker, "cross-cap-marker", CROSS_CAP_COLOR));
      } else {
        body.push(circle(px, py, marker * 0.5, "other-point", OTHER_COLOR));
      }
    }
    body.push(text(cx, cy + panel + 14, `sample ${sampleIndex} (cusps: ${cusps})`, 11));
  });
  if (groups.length === 0) {
    body.push(text(width / 2, height / 2, "no singular points recorded", 12, "middle"));
  }
  return svgDocument(width, height, body.join("\n"));
}

export function renderMarginHistogram(csv: ReportCsv, options: FigureOptions = {}): string {
  const width = 520, height = 340, left = 56, bottom = 48, top = 24, right = 16;
  const bins = options.bins ?? 24;
  const margins = csv.rows
    .map((r) => r.margin)
    .filter((m) => Number.isFinite(m) && m > 0)
    .map((m) => Math.log10(m));
  const body: string[] = [rect(0, 0, width, height, { fill: "white" })];
  if (margins.length === 0) {
    body.push(text(width / 2, height / 2, "no margins recorded", 12, "middle"));
    return svgDocument(width, height, body.join("\n"));
  }
  const lo = Math.floor(Math.min(...margins));
  const hi = Math.ceil(Math.max(...margins)) + 1e-9;
  const counts = new Array(bins).fill(0);
  for (const m of margins) {
    const b = Math.min(bins - 1, Math.floor(((m - lo) / (hi - lo)) * bins));
    counts[b] += 1;
  }
  const peak = Math.max(...counts, 1);
  const plotW = width - left - right;
  const plotH = height - top - bottom;
  counts.forEach((c, b) => {
    const h = (c / peak) * plotH;
    body.push(rect(left + (b / bins) * plotW, top + plotH - h, plotW / bins - 1, h, {
      fill: FOLD_COLOR, class: "bar",
    }));
  });
  body.push(line(left, top + plotH, left + plotW, top + plotH, "#333333"));
  body.push(line(left, top, left, top + plotH, "#333333"));
  body.push(text(left + plotW / 2, height - 12, "log10(margin)", 12, "middle"));
  body.push(text(16, top + plotH / 2, `n = ${margins.length}`, 11));
  for (let t = lo; t <= Math.ceil(hi); t += Math.max(1, Math.round((hi - lo) / 8))) {
    const x = left + ((t - lo) / (hi - lo)) * plotW;
    body.push(line(x, top + plotH, x, top + plotH + 4, "#333333"));
    body.push(text(x, top + plotH + 18, String(t), 10, "middle"));
  }
  return svgDocument(width, height, body.join("\n"));
}

export function renderDoublePointMap(csv: ReportCsv, options: FigureOptions = {}): string {
  const width = 520, height = 520, pad = 40;
  const marker = options.markerSize ?? 4;
  const rows = csv.rows.filter((r) => r.classification.startsWith("double_point"));
  const body: string[] = [rect(0, 0, width, height, { fill: "white" })];
  if (rows.length === 0) {
    body.push(text(width / 2, height / 2, "no double points recorded", 12, "middle"));
    return svgDocument(width, height, body.join("\n"));
  }
  const vp = makeViewport(pointBounds(rows), {
    left: pad, top: pad, width: width - 2 * pad, height: height - 2 * pad,
  });
  body.push(rect(pad, pad, width - 2 * pad, height - 2 * pad, {
    fill: "none", stroke: "#999999", "stroke-width": 1,
  }));
  let tangential = 0;
  for (const r of rows) {
    if (r.point.length < 2) continue;
    const px = vp.x(r.point[0]);
    const py = vp.y(r.point[1]);
    if (r.classification === "double_point_transverse") {
      body.push(circle(px, py, marker * 0.6, "double-transverse", FOLD_COLOR));
    } else {
      tangential += 1;
      body.push(crossMarker(px, py, marker, "double-tangential", TANGENT_COLOR));
    }
  }
  body.push(text(pad, height - 14,
    `double-point preimages: ${rows.length} (tangential: ${tangential})`, 11));
  return svgDocument(width, height, body.join("\n"));
}

export function renderFigure(kind: FigureKind, csv: ReportCsv, options: FigureOptions = {}): string {
  switch (kind) {
    case "singular_curve":
      return renderSingularCurve(csv, options);
    case "margin_histogram":
      return renderMarginHistogram(csv, options);
    case "double_point_map":
      return renderDoublePointMap(csv, options);
    default: {
      const never: never = kind;
      throw new Error(`unknown figure kind ${never}`);
    }
  }
}

/** Count markers with a given class attribute in rendered SVG text. */
export function countMarkers(svg: string, cls: string): number {
  const matches = svg.match(new RegExp(`class="${cls}"`, "g"));
  return matches ? matches.length : 0;
}

export { fmt };
