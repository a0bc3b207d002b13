/** Zod schemas for the exporter's file formats, enforced before any
 * rendering so a malformed input dies with a path into the document
 * rather than as NaN geometry. */

import { z } from "zod";

const finite = z.number().finite();
const maybeStat = z.union([finite, z.null()]);

export const rewiringStatsSchema = z
  .object({
    n: z.number().int().positive(),
    n_layers: z.number().int().positive(),
    n_windows: z.number().int().positive(),
    attention_kind: z.string(),
    mean_beta_matrix: z.array(z.array(finite)),
    per_source_mean: z.array(maybeStat),
    per_source_std: z.array(maybeStat),
    per_destination_mean: z.array(maybeStat),
    per_destination_std: z.array(maybeStat),
  })
  .superRefine((doc, ctx) => {
    if (doc.mean_beta_matrix.length !== doc.n) {
      ctx.addIssue({
        code: z.ZodIssueCode.custom,
        path: ["mean_beta_matrix"],
        message: `expected ${doc.n} rows, got ${doc.mean_beta_matrix.length}`,
      });
      return;
    }
    doc.mean_beta_matrix.forEach((row, i) => {
      if (row.length !== doc.n) {
        ctx.addIssue({
          code: z.ZodIssueCode.custom,
          path: ["mean_beta_matrix", i],
          message: `expected ${doc.n} columns, got ${row.length}`,
        });
      }
    });
    for (const key of [
      "per_source_mean",
      "per_source_std",
      "per_destination_mean",
      "per_destination_std",
    ] as const) {
      if (doc[key].length !== doc.n) {
        ctx.addIssue({
          code: z.ZodIssueCode.custom,
          path: [key],
          message: `expected ${doc.n} entries, got ${doc[key].length}`,
        });
      }
    }
  });

export type RewiringStats = z.infer<typeof rewiringStatsSchema>;

export const passkeySummarySchema = z.object({
  cells: z
    .array(
      z.object({
        seq_len: z.number().int().positive(),
        depth: finite.min(0).max(1),
        accuracy: finite.min(0).max(1),
        trials: z.number().int().positive(),
      }),
    )
    .min(1),
});

export type PasskeySummary = z.infer<typeof passkeySummarySchema>;
