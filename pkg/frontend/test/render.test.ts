import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { runCli } from "../src/cli";
import { ParseError } from "../src/csv";
import { renderHeatmap } from "../src/heatmap";
import { renderLine } from "../src/line";
import { rewiringStatsSchema } from "../src/schemas";
import { MARGIN } from "../src/svg";

const GOLDEN = path.join(__dirname, "..", "golden");
let tmp: string;

beforeAll(() => {
  tmp = fs.mkdtempSync(path.join(os.tmpdir(), "plots-"));
});
afterAll(() => {
  fs.rmSync(tmp, { recursive: true, force: true });
});

function g(name: string): string {
  return path.join(GOLDEN, name);
}

/** Every golden file with the CLI invocation that consumes it. */
const GOLDEN_JOBS: [string, string[]][] = [
  ["loss", ["line", "--in", g("loss.csv"), "--x", "step", "--y", "loss"]],
  ["extrapolate", ["line", "--in", g("extrapolate.csv")]],
  [
    "passkey-trials",
    ["line", "--in", g("passkey.csv"), "--x", "seq_len", "--y", "exact", "--series", "depth"],
  ],
  ["passkey-summary", ["line", "--in", g("passkey_summary.json")]],
  ["beta-heatmap", ["heatmap", "--in", g("rewiring_stats.json")]],
  ["beta-band-source", ["band", "--in", g("rewiring_stats.json")]],
  [
    "beta-band-dest",
    ["band", "--in", g("rewiring_stats.json"), "--key", "destination"],
  ],
];

describe("golden renders", () => {
  for (const [name, argv] of GOLDEN_JOBS) {
    it(`renders ${name} without error`, () => {
      const out = path.join(tmp, `${name}.svg`);
      runCli([...argv, "--out", out]);
      const svg = fs.readFileSync(out, "utf8");
      expect(svg.startsWith("<svg ")).toBe(true);
      expect(svg).toContain("</svg>");
      expect(svg).not.toContain("NaN");
    });
  }

  it("is byte-deterministic across two runs of every job", () => {
    for (const [name, argv] of GOLDEN_JOBS) {
      const a = path.join(tmp, `${name}-a.svg`);
      const b = path.join(tmp, `${name}-b.svg`);
      runCli([...argv, "--out", a]);
      runCli([...argv, "--out", b]);
      expect(fs.readFileSync(a).equals(fs.readFileSync(b)), name).toBe(true);
    }
  });
});

describe("heatmap mask", () => {
  const doc = rewiringStatsSchema.parse(
    JSON.parse(fs.readFileSync(g("rewiring_stats.json"), "utf8")),
  );

  it("draws exactly the lower triangle", () => {
    const svg = renderHeatmap(doc, "t");
    const cells = svg.match(/class="cell"/g) ?? [];
    expect(cells.length).toBe((doc.n * (doc.n + 1)) / 2);
  });

  it("places every cell at col <= row", () => {
    const svg = renderHeatmap(doc, "t");
    const rx = /<rect class="cell" x="([^"]+)" y="([^"]+)" width="([^"]+)"/g;
    let m: RegExpExecArray | null;
    let seen = 0;
    while ((m = rx.exec(svg)) !== null) {
      const cell = Number(m[3]);
      const col = Math.round((Number(m[1]) - MARGIN.left) / cell);
      const row = Math.round((Number(m[2]) - MARGIN.top) / cell);
      expect(col).toBeLessThanOrEqual(row);
      seen += 1;
    }
    expect(seen).toBe((doc.n * (doc.n + 1)) / 2);
  });

  it("keeps the blank wedge blank for a small handmade matrix", () => {
    const small = {
      ...doc,
      n: 3,
      mean_beta_matrix: [
        [1, 0, 0],
        [1, 1, 0],
        [1, 0.5, 1],
      ],
      per_source_mean: [null, 0.5, null],
      per_source_std: [null, 0.0, null],
      per_destination_mean: [null, null, 0.5],
      per_destination_std: [null, null, 0.0],
    };
    const svg = renderHeatmap(rewiringStatsSchema.parse(small), "t");
    expect((svg.match(/class="cell"/g) ?? []).length).toBe(6);
  });
});

describe("degenerate but legal inputs", () => {
  it("renders a one-cell summary as a single dot", () => {
    const spec = {
      series: [{ label: "depth=0.5", points: [[64, 1]] as [number, number][] }],
      xLabel: "context length",
      yLabel: "accuracy",
      title: "one cell",
    };
    const svg = renderLine(spec);
    expect(svg).toContain("<circle");
    expect(svg).not.toContain("polyline");
  });

  it("splits the band at interior nulls instead of bridging them", () => {
    const stats = rewiringStatsSchema.parse(
      JSON.parse(fs.readFileSync(g("rewiring_stats.json"), "utf8")),
    );
    const holed = {
      ...stats,
      per_source_mean: stats.per_source_mean.map((v, i) => (i === 10 ? null : v)),
      per_source_std: stats.per_source_std.map((v, i) => (i === 10 ? null : v)),
    };
    const out = path.join(tmp, "holed.json");
    fs.writeFileSync(out, JSON.stringify(holed));
    const dst = path.join(tmp, "holed.svg");
    runCli(["band", "--in", out, "--out", dst]);
    const svg = fs.readFileSync(dst, "utf8");
    expect((svg.match(/<polygon/g) ?? []).length).toBe(2);
  });
});

describe("failure modes", () => {
  it("rejects an unknown chart kind", () => {
    expect(() =>
      runCli(["pie", "--in", g("loss.csv"), "--out", path.join(tmp, "x.svg")]),
    ).toThrow();
  });

  it("rejects schema-invalid stats with a descriptive message", () => {
    const bad = path.join(tmp, "bad.json");
    fs.writeFileSync(bad, JSON.stringify({ n: 4, cells: "nope" }));
    expect(() =>
      runCli(["heatmap", "--in", bad, "--out", path.join(tmp, "x.svg")]),
    ).toThrow(/bad\.json/);
  });

  it("rejects a missing plot column by name", () => {
    expect(() =>
      runCli([
        "line",
        "--in",
        g("loss.csv"),
        "--y",
        "perplexity",
        "--out",
        path.join(tmp, "x.svg"),
      ]),
    ).toThrow(/perplexity/);
  });

  it("rejects plotting a string column", () => {
    expect(() =>
      runCli([
        "line",
        "--in",
        g("passkey.csv"),
        "--x",
        "seq_len",
        "--y",
        "predicted",
        "--out",
        path.join(tmp, "x.svg"),
      ]),
    ).toThrow(ParseError);
  });

  it("requires exactly one input for heatmaps", () => {
    expect(() =>
      runCli([
        "heatmap",
        "--in",
        g("rewiring_stats.json"),
        g("rewiring_stats.json"),
        "--out",
        path.join(tmp, "x.svg"),
      ]),
    ).toThrow(/exactly one/);
  });
});
