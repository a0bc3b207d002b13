import { numericColumn, ParseError, Table } from "./csv";
import { extent, linearScale } from "./scale";
import {
  axes,
  document,
  el,
  fmt,
  MARGIN,
  PALETTE,
  PLOT_H,
  PLOT_W,
  text,
} from "./svg";
import { PasskeySummary } from "./schemas";

export interface Series {
  label: string;
  points: [number, number][];
}

export interface LineSpec {
  series: Series[];
  xLabel: string;
  yLabel: string;
  title: string;
}

export function renderLine(spec: LineSpec): string {
  if (spec.series.length === 0 || spec.series.every((s) => s.points.length === 0)) {
    throw new ParseError("line chart: no points to draw");
  }
  const xs = spec.series.flatMap((s) => s.points.map((p) => p[0]));
  const ys = spec.series.flatMap((s) => s.points.map((p) => p[1]));
  const sx = linearScale(extent(xs), [MARGIN.left, MARGIN.left + PLOT_W]);
  const sy = linearScale(extent(ys), [MARGIN.top + PLOT_H, MARGIN.top]);

  const body = axes(sx, sy, spec.xLabel, spec.yLabel);
  spec.series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const pts = s.points
      .map(([x, y]) => `${fmt(sx(x))},${fmt(sy(y))}`)
      .join(" ");
    if (s.points.length === 1) {
      // a single cell still renders: one visible dot instead of a path
      body.push(
        el("circle", { cx: sx(s.points[0][0]), cy: sy(s.points[0][1]), r: 4, fill: color }),
      );
    } else {
      body.push(
        el("polyline", {
          points: pts,
          fill: "none",
          stroke: color,
          "stroke-width": 1.5,
        }),
      );
    }
    if (spec.series.length > 1) {
      const lx = MARGIN.left + PLOT_W - 150;
      const ly = MARGIN.top + 14 + 16 * i;
      body.push(
        el("line", { x1: lx, y1: ly - 4, x2: lx + 18, y2: ly - 4, stroke: color, "stroke-width": 2 }),
        text(s.label, lx + 24, ly),
      );
    }
  });
  return document(body, spec.title);
}

/** Build series from a numeric CSV: one series per file unless a
 * grouping column is named, in which case each distinct value of that
 * column becomes a series (e.g. passkey depth). */
export function seriesFromTable(
  table: Table,
  x: string,
  y: string,
  groupBy: string | undefined,
  label: string,
): Series[] {
  const xv = numericColumn(table, x, label);
  const yv = numericColumn(table, y, label);
  if (groupBy === undefined) {
    return [{ label, points: xv.map((v, i) => [v, yv[i]]) }];
  }
  const gv = numericColumn(table, groupBy, label);
  const groups = new Map<number, [number, number][]>();
  gv.forEach((key, i) => {
    if (!groups.has(key)) groups.set(key, []);
    groups.get(key)!.push([xv[i], yv[i]]);
  });
  return [...groups.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([key, points]) => ({ label: `${groupBy}=${fmt(key)}`, points }));
}

/** Retrieval summary: accuracy vs context length, one series per depth. */
export function seriesFromPasskeySummary(doc: PasskeySummary): Series[] {
  const byDepth = new Map<number, [number, number][]>();
  for (const c of doc.cells) {
    if (!byDepth.has(c.depth)) byDepth.set(c.depth, []);
    byDepth.get(c.depth)!.push([c.seq_len, c.accuracy]);
  }
  return [...byDepth.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([depth, points]) => ({
      label: `depth=${fmt(depth)}`,
      points: points.sort((a, b) => a[0] - b[0]),
    }));
}
