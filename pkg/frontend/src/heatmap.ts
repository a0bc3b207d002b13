import { extent, linearScale } from "./scale";
import {
  document,
  el,
  fmt,
  MARGIN,
  PLOT_H,
  PLOT_W,
  rampColor,
  text,
} from "./svg";
import { RewiringStats } from "./schemas";

/** Mean down-scale heatmap. Only the causal support (col <= row) is
 * drawn; the upper triangle stays blank because those edges do not
 * exist. Color domain is the drawn cells' min/max so the structure is
 * visible even when every value sits near 0.5. */
export function renderHeatmap(doc: RewiringStats, title: string): string {
  const n = doc.n;
  const values: number[] = [];
  for (let i = 0; i < n; i++) {
    for (let j = 0; j <= i; j++) {
      values.push(doc.mean_beta_matrix[i][j]);
    }
  }
  const [lo, hi] = extent(values);
  const side = Math.min(PLOT_W - 60, PLOT_H); // leave room for the colorbar
  const cell = side / n;
  const x0 = MARGIN.left;
  const y0 = MARGIN.top;

  const body: string[] = [];
  for (let i = 0; i < n; i++) {
    for (let j = 0; j <= i; j++) {
      const v = doc.mean_beta_matrix[i][j];
      const t = hi > lo ? (v - lo) / (hi - lo) : 0.5;
      body.push(
        el("rect", {
          class: "cell",
          x: x0 + j * cell,
          y: y0 + i * cell,
          width: cell,
          height: cell,
          fill: rampColor(t),
        }),
      );
    }
  }
  body.push(
    el("rect", {
      x: x0,
      y: y0,
      width: side,
      height: side,
      fill: "none",
      stroke: "#333",
    }),
    text("source", x0 + side / 2, y0 + side + 18, { "text-anchor": "middle" }),
    text("destination", x0 - 10, y0 + side / 2, {
      "text-anchor": "middle",
      transform: `rotate(-90 ${fmt(x0 - 10)} ${fmt(y0 + side / 2)})`,
    }),
  );

  // vertical colorbar, low (purple) at the bottom
  const bx = x0 + side + 28;
  const steps = 32;
  const bh = side / steps;
  for (let k = 0; k < steps; k++) {
    body.push(
      el("rect", {
        x: bx,
        y: y0 + side - (k + 1) * bh,
        width: 14,
        height: bh + 0.5,
        fill: rampColor(k / (steps - 1)),
      }),
    );
  }
  const sv = linearScale([lo, hi], [y0 + side, y0]);
  body.push(
    el("rect", { x: bx, y: y0, width: 14, height: side, fill: "none", stroke: "#333" }),
    text(fmt(lo), bx + 20, sv(lo) + 4),
    text(fmt(hi), bx + 20, sv(hi) + 4),
    text(fmt((lo + hi) / 2), bx + 20, sv((lo + hi) / 2) + 4),
  );
  return document(body, title);
}
