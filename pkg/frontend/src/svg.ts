/** Deterministic SVG assembly: fixed canvas, fixed styles, fixed number
 * formatting, no timestamps or ids — the same input bytes must always
 * produce the same output bytes. */

import { Scale, ticks } from "./scale";

export const WIDTH = 640;
export const HEIGHT = 420;
export const MARGIN = { top: 36, right: 24, bottom: 46, left: 64 } as const;

export const PLOT_W = WIDTH - MARGIN.left - MARGIN.right;
export const PLOT_H = HEIGHT - MARGIN.top - MARGIN.bottom;

/** Series colors, colorblind-safe-ish, applied in declaration order. */
export const PALETTE = [
  "#4053d3",
  "#dd7411",
  "#1d9f6e",
  "#b51d14",
  "#8a57c8",
  "#6b6b6b",
];

/** Fixed-precision coordinate/label formatting (6 significant digits,
 * trailing zeros dropped) so geometry never carries float noise. */
export function fmt(x: number): string {
  if (!Number.isFinite(x)) throw new Error(`non-finite coordinate: ${x}`);
  if (x === 0) return "0";
  const s = Number(x.toPrecision(6));
  return String(s);
}

export function esc(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function el(
  tag: string,
  attrs: Record<string, string | number>,
  children: string[] = [],
): string {
  const parts = Object.entries(attrs)
    .map(([k, v]) => `${k}="${typeof v === "number" ? fmt(v) : esc(v)}"`)
    .join(" ");
  const open = parts.length > 0 ? `<${tag} ${parts}>` : `<${tag}>`;
  if (children.length === 0) return open.replace(/>$/, "/>");
  return `${open}${children.join("")}</${tag}>`;
}

export function text(
  s: string,
  x: number,
  y: number,
  attrs: Record<string, string | number> = {},
): string {
  return el(
    "text",
    {
      x,
      y,
      "font-family": "monospace",
      "font-size": 12,
      fill: "#333",
      ...attrs,
    },
    [esc(s)],
  );
}

export function document(body: string[], title: string): string {
  return [
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" viewBox="0 0 ${WIDTH} ${HEIGHT}">`,
    el("rect", { x: 0, y: 0, width: WIDTH, height: HEIGHT, fill: "#ffffff" }),
    text(title, MARGIN.left, 22, { "font-size": 14, "font-weight": "bold" }),
    ...body,
    "</svg>",
  ].join("\n");
}

/** Standard axis furniture: tick marks, grid lines, labels. */
export function axes(
  xs: Scale,
  ys: Scale,
  xLabel: string,
  yLabel: string,
): string[] {
  const out: string[] = [];
  const x0 = MARGIN.left;
  const y0 = MARGIN.top + PLOT_H;
  out.push(
    el("line", { x1: x0, y1: y0, x2: x0 + PLOT_W, y2: y0, stroke: "#333" }),
    el("line", { x1: x0, y1: MARGIN.top, x2: x0, y2: y0, stroke: "#333" }),
  );
  for (const t of ticks(xs.domain[0], xs.domain[1], 6)) {
    const px = xs(t);
    out.push(
      el("line", { x1: px, y1: MARGIN.top, x2: px, y2: y0, stroke: "#e0e0e0" }),
      el("line", { x1: px, y1: y0, x2: px, y2: y0 + 5, stroke: "#333" }),
      text(fmt(t), px, y0 + 18, { "text-anchor": "middle" }),
    );
  }
  for (const t of ticks(ys.domain[0], ys.domain[1], 6)) {
    const py = ys(t);
    out.push(
      el("line", {
        x1: x0,
        y1: py,
        x2: x0 + PLOT_W,
        y2: py,
        stroke: "#e0e0e0",
      }),
      el("line", { x1: x0 - 5, y1: py, x2: x0, y2: py, stroke: "#333" }),
      text(fmt(t), x0 - 8, py + 4, { "text-anchor": "end" }),
    );
  }
  out.push(
    text(xLabel, x0 + PLOT_W / 2, HEIGHT - 10, { "text-anchor": "middle" }),
    text(yLabel, 14, MARGIN.top + PLOT_H / 2, {
      "text-anchor": "middle",
      transform: `rotate(-90 14 ${MARGIN.top + PLOT_H / 2})`,
    }),
  );
  return out;
}

/** Purple (low) to yellow (high) ramp: lower values read as stronger
 * down-scaling, matching the heatmap convention everywhere else. */
export function rampColor(t: number): string {
  const lo = [68, 1, 84];
  const hi = [253, 231, 37];
  const clamped = Math.min(1, Math.max(0, t));
  const c = lo.map((a, i) => Math.round(a + (hi[i] - a) * clamped));
  return `rgb(${c[0]},${c[1]},${c[2]})`;
}
