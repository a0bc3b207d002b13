import { ParseError } from "./csv";
import { extent, linearScale } from "./scale";
import { axes, document, el, fmt, MARGIN, PALETTE, PLOT_H, PLOT_W } from "./svg";
import { RewiringStats } from "./schemas";

export type BandKey = "source" | "destination";

/** Per-position mean down-scale factor with a +-1 std band. Positions
 * with no eligible edges export null and are skipped; if nulls split
 * the axis, each contiguous run becomes its own band segment. */
export function renderBand(
  doc: RewiringStats,
  key: BandKey,
  title: string,
): string {
  const mean =
    key === "source" ? doc.per_source_mean : doc.per_destination_mean;
  const std = key === "source" ? doc.per_source_std : doc.per_destination_std;

  const segments: { pos: number; m: number; s: number }[][] = [];
  let current: { pos: number; m: number; s: number }[] = [];
  mean.forEach((m, pos) => {
    const s = std[pos];
    if (m === null || s === null) {
      if (current.length > 0) segments.push(current);
      current = [];
    } else {
      current.push({ pos, m, s });
    }
  });
  if (current.length > 0) segments.push(current);
  if (segments.length === 0) {
    throw new ParseError(`band chart: every ${key} position is null`);
  }

  const flat = segments.flat();
  const los = flat.map((p) => p.m - p.s);
  const his = flat.map((p) => p.m + p.s);
  const sx = linearScale([0, doc.n - 1], [MARGIN.left, MARGIN.left + PLOT_W]);
  const sy = linearScale(extent([...los, ...his]), [
    MARGIN.top + PLOT_H,
    MARGIN.top,
  ]);

  const body = axes(sx, sy, `${key} position`, "mean down-scale factor");
  const color = PALETTE[0];
  for (const seg of segments) {
    const upper = seg.map((p) => `${fmt(sx(p.pos))},${fmt(sy(p.m + p.s))}`);
    const lower = seg
      .slice()
      .reverse()
      .map((p) => `${fmt(sx(p.pos))},${fmt(sy(p.m - p.s))}`);
    body.push(
      el("polygon", {
        points: [...upper, ...lower].join(" "),
        fill: color,
        "fill-opacity": 0.2,
        stroke: "none",
      }),
      el("polyline", {
        points: seg.map((p) => `${fmt(sx(p.pos))},${fmt(sy(p.m))}`).join(" "),
        fill: "none",
        stroke: color,
        "stroke-width": 1.5,
      }),
    );
  }
  return document(body, title);
}
