import * as fs from "fs";
import * as path from "path";
import { describe, expect, it } from "vitest";

import { numericColumn, parseCsv, ParseError } from "../src/csv";
import { passkeySummarySchema, rewiringStatsSchema } from "../src/schemas";

const GOLDEN = path.join(__dirname, "..", "golden");

function goldenJson(name: string): unknown {
  return JSON.parse(fs.readFileSync(path.join(GOLDEN, name), "utf8"));
}

describe("rewiring stats schema", () => {
  it("accepts the golden export", () => {
    const doc = rewiringStatsSchema.parse(goldenJson("rewiring_stats.json"));
    expect(doc.mean_beta_matrix.length).toBe(doc.n);
  });

  it("rejects a ragged matrix with a path into the document", () => {
    const doc = rewiringStatsSchema.parse(goldenJson("rewiring_stats.json"));
    const bad = {
      ...doc,
      mean_beta_matrix: doc.mean_beta_matrix.map((row, i) =>
        i === 3 ? row.slice(0, -1) : row,
      ),
    };
    const res = rewiringStatsSchema.safeParse(bad);
    expect(res.success).toBe(false);
    if (!res.success) {
      expect(res.error.issues[0].path).toEqual(["mean_beta_matrix", 3]);
    }
  });

  it("rejects wrong-length per-position vectors", () => {
    const doc = rewiringStatsSchema.parse(goldenJson("rewiring_stats.json"));
    const bad = { ...doc, per_source_mean: doc.per_source_mean.slice(1) };
    expect(rewiringStatsSchema.safeParse(bad).success).toBe(false);
  });

  it("rejects non-numeric matrix cells", () => {
    const doc = rewiringStatsSchema.parse(goldenJson("rewiring_stats.json"));
    const rows = doc.mean_beta_matrix.map((r) => [...r]) as unknown[][];
    rows[0][0] = "high";
    expect(
      rewiringStatsSchema.safeParse({ ...doc, mean_beta_matrix: rows }).success,
    ).toBe(false);
  });
});

describe("passkey summary schema", () => {
  it("accepts the golden export", () => {
    const doc = passkeySummarySchema.parse(goldenJson("passkey_summary.json"));
    expect(doc.cells.length).toBeGreaterThan(0);
  });

  it("rejects accuracy outside [0, 1]", () => {
    const doc = passkeySummarySchema.parse(goldenJson("passkey_summary.json"));
    const bad = { cells: [{ ...doc.cells[0], accuracy: 1.5 }] };
    expect(passkeySummarySchema.safeParse(bad).success).toBe(false);
  });

  it("rejects an empty cell list", () => {
    expect(passkeySummarySchema.safeParse({ cells: [] }).success).toBe(false);
  });
});

describe("csv tables", () => {
  it("parses the golden loss curve with numeric columns", () => {
    const t = parseCsv(fs.readFileSync(path.join(GOLDEN, "loss.csv"), "utf8"));
    expect(t.columns).toEqual(["step", "loss", "lr", "tokens"]);
    expect(numericColumn(t, "loss").every(Number.isFinite)).toBe(true);
  });

  it("keeps string cells but refuses to plot them", () => {
    const t = parseCsv("a,b\n1,x\n2,y\n");
    expect(numericColumn(t, "a")).toEqual([1, 2]);
    expect(() => numericColumn(t, "b")).toThrow(ParseError);
    expect(() => numericColumn(t, "b")).toThrow(/row 1, column b/);
  });

  it("names a missing column and lists what exists", () => {
    const t = parseCsv("a,b\n1,2\n");
    expect(() => numericColumn(t, "loss")).toThrow(/have: a, b/);
  });

  it("rejects empty input", () => {
    expect(() => parseCsv("")).toThrow(ParseError);
    expect(() => parseCsv("a,b\n")).toThrow(/no data rows/);
  });
});
