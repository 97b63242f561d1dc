/** Minimal deterministic SVG string building (no DOM, no randomness). */

export function fmt(v: number): string {
  if (!Number.isFinite(v)) return "0";
  const s = v.toFixed(3);
  return s === "-0.000" ? "0.000" : s;
}

export function tag(name: string, attrs: Record<string, string | number>, body = ""): string {
  const parts = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : v}"`)
    .join(" ");
  return body === "" ? `<${name} ${parts}/>` : `<${name} ${parts}>${body}</${name}>`;
}

export function circle(cx: number, cy: number, r: number, cls: string, fill: string): string {
  return tag("circle", { cx, cy, r, class: cls, fill });
}

export function crossMarker(cx: number, cy: number, size: number, cls: string, stroke: string): string {
  const s = size;
  const d = `M ${fmt(cx - s)} ${fmt(cy - s)} L ${fmt(cx + s)} ${fmt(cy + s)} ` +
    `M ${fmt(cx - s)} ${fmt(cy + s)} L ${fmt(cx + s)} ${fmt(cy - s)}`;
  return tag("path", { d, class: cls, stroke, "stroke-width": 1.6, fill: "none" });
}

export function rect(x: number, y: number, w: number, h: number, attrs: Record<string, string | number>): string {
  return tag("rect", { x, y, width: w, height: h, ...attrs });
}

export function line(x1: number, y1: number, x2: number, y2: number, stroke: string, width = 1): string {
  return tag("line", { x1, y1, x2, y2, stroke, "stroke-width": width });
}

export function text(x: number, y: number, content: string, size = 11, anchor = "start"): string {
  return tag(
    "text",
    { x, y, "font-size": size, "font-family": "sans-serif", "text-anchor": anchor },
    escapeXml(content),
  );
}

export function escapeXml(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}

export function svgDocument(width: number, height: number, body: string): string {
  return (
    `<?xml version="1.0" encoding="UTF-8"?>\n` +
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
    `viewBox="0 0 ${width} ${height}">\n${body}\n</svg>\n`
  );
}

/** Affine map from data bounds to a pixel rectangle (y flipped). */
export interface Viewport {
  x: (v: number) => number;
  y: (v: number) => number;
}

export function makeViewport(
  bounds: { xMin: number; xMax: number; yMin: number; yMax: number },
  px: { left: number; top: number; width: number; height: number },
): Viewport {
  const dx = bounds.xMax - bounds.xMin || 1;
  const dy = bounds.yMax - bounds.yMin || 1;
  return {
    x: (v) => px.left + ((v - bounds.xMin) / dx) * px.width,
    y: (v) => px.top + px.height - ((v - bounds.yMin) / dy) * px.height,
  };
}
