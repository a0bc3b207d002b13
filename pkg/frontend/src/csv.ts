import Papa from "papaparse";

export class ParseError extends Error {}

/** One parsed CSV: header-ordered columns, cells as papaparse typed
 * them (numbers where they parse, otherwise raw strings). Numeric
 * enforcement happens per plotted column, not per file — exports mix
 * measurements with string fields like predicted passkeys. */
export interface Table {
  columns: string[];
  rows: Record<string, unknown>[];
}

export function parseCsv(text: string, label = "csv"): Table {
  const out = Papa.parse<Record<string, unknown>>(text, {
    header: true,
    dynamicTyping: true,
    skipEmptyLines: true,
  });
  if (out.errors.length > 0) {
    const e = out.errors[0];
    throw new ParseError(`${label}: ${e.message} (row ${e.row})`);
  }
  const columns = out.meta.fields ?? [];
  if (columns.length === 0) {
    throw new ParseError(`${label}: no header line`);
  }
  if (out.data.length === 0) {
    throw new ParseError(`${label}: no data rows`);
  }
  return { columns, rows: out.data };
}

/** Extract one column as finite numbers, naming the first bad cell. */
export function numericColumn(
  table: Table,
  name: string,
  label = "csv",
): number[] {
  if (!table.columns.includes(name)) {
    throw new ParseError(
      `${label}: no column named ${name} (have: ${table.columns.join(", ")})`,
    );
  }
  return table.rows.map((row, i) => {
    const v = row[name];
    if (typeof v !== "number" || !Number.isFinite(v)) {
      throw new ParseError(
        `${label}: row ${i + 1}, column ${name}: not a finite number (${String(v)})`,
      );
    }
    return v;
  });
}
