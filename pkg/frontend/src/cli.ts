#!/usr/bin/env node
/** plot <kind> --in <files..> --out <img>
 *
 * Kinds: line (numeric CSV or retrieval-summary JSON), heatmap and band
 * (rewiring-stats JSON). Output is SVG; rendering is a pure function of
 * the inputs, so reruns are byte-identical.
 */

import * as fs from "fs";
import * as path from "path";
import yargs from "yargs";
import { ZodError } from "zod";

import { renderBand, BandKey } from "./band";
import { ParseError, parseCsv } from "./csv";
import { renderHeatmap } from "./heatmap";
import { renderLine, Series, seriesFromPasskeySummary, seriesFromTable } from "./line";
import { passkeySummarySchema, rewiringStatsSchema } from "./schemas";

interface Flags {
  in: string[];
  out: string;
  x?: string;
  y?: string;
  series?: string;
  key: BandKey;
  title?: string;
}

function readJson(file: string): unknown {
  try {
    return JSON.parse(fs.readFileSync(file, "utf8"));
  } catch (e) {
    throw new ParseError(`${file}: ${(e as Error).message}`);
  }
}

function describeZod(file: string, e: ZodError): ParseError {
  const issue = e.issues[0];
  const where = issue.path.length > 0 ? issue.path.join(".") : "(root)";
  return new ParseError(`${file}: ${where}: ${issue.message}`);
}

function lineChart(flags: Flags): string {
  const series: Series[] = [];
  let xLabel = flags.x ?? "";
  let yLabel = flags.y ?? "";
  for (const file of flags.in) {
    if (file.endsWith(".json")) {
      const check = passkeySummarySchema.safeParse(readJson(file));
      if (!check.success) throw describeZod(file, check.error);
      series.push(...seriesFromPasskeySummary(check.data));
      xLabel = xLabel || "context length";
      yLabel = yLabel || "exact-match accuracy";
    } else {
      const table = parseCsv(fs.readFileSync(file, "utf8"), file);
      const x = flags.x ?? table.columns[0];
      const y = flags.y ?? table.columns[1];
      if (y === undefined) {
        throw new ParseError(`${file}: need at least two columns`);
      }
      series.push(
        ...seriesFromTable(table, x, y, flags.series, stem(file)),
      );
      xLabel = xLabel || x;
      yLabel = yLabel || y;
    }
  }
  return renderLine({
    series,
    xLabel,
    yLabel,
    title: flags.title ?? stem(flags.in[0]),
  });
}

function statsChart(flags: Flags, kind: "heatmap" | "band"): string {
  if (flags.in.length !== 1) {
    throw new ParseError(`${kind} takes exactly one input file`);
  }
  const file = flags.in[0];
  const check = rewiringStatsSchema.safeParse(readJson(file));
  if (!check.success) throw describeZod(file, check.error);
  const title = flags.title ?? stem(file);
  return kind === "heatmap"
    ? renderHeatmap(check.data, title)
    : renderBand(check.data, flags.key, title);
}

function stem(file: string): string {
  return path.basename(file).replace(/\.[^.]+$/, "");
}

/** Parse argv and write the figure; throws ParseError on any bad input. */
export function runCli(argv: string[]): void {
  const parsed = yargs(argv)
    .usage("plot <kind> --in <files..> --out <img>")
    .command("line", "x/y series from CSV or retrieval-summary JSON")
    .command("heatmap", "mean down-scale matrix (upper triangle blank)")
    .command("band", "per-position mean with +-1 std band")
    .option("in", { type: "string", array: true, demandOption: true })
    .option("out", { type: "string", demandOption: true })
    .option("x", { type: "string", describe: "x column (line/CSV only)" })
    .option("y", { type: "string", describe: "y column (line/CSV only)" })
    .option("series", { type: "string", describe: "group-by column" })
    .option("key", {
      choices: ["source", "destination"] as const,
      default: "source" as BandKey,
      describe: "band chart position axis",
    })
    .option("title", { type: "string" })
    .demandCommand(1, "pass a chart kind: line, heatmap, or band")
    .strict()
    .exitProcess(false)
    .fail((msg, err) => {
      throw err ?? new ParseError(msg);
    })
    .parseSync();

  const kind = String(parsed._[0]);
  const flags = parsed as unknown as Flags;
  let svg: string;
  if (kind === "line") svg = lineChart(flags);
  else if (kind === "heatmap" || kind === "band") svg = statsChart(flags, kind);
  else throw new ParseError(`unknown chart kind: ${kind}`);
  fs.writeFileSync(flags.out, svg + "\n", "utf8");
}

if (require.main === module) {
  try {
    runCli(process.argv.slice(2));
  } catch (e) {
    console.error(String(e instanceof Error ? e.message : e));
    process.exit(1);
  }
}
