// Feature-by-feature diff between the source instance and a counterfactual.
// Unchanged features render as "="; changed continuous features show
// old -> new with the signed delta; changed categoricals show old -> new.

import type { RawInstance, ResultDocument, SchemaDocument } from "./types.js";

// equality tolerance for continuous values: solver output is exact up to
// boundary nudges around 1e-9, display rounding handles the rest
const SAME_TOL = 1e-9;

export interface DiffRow {
  feature: string;
  kind: "continuous" | "categorical";
  changed: boolean;
  display: string; // "=" or "old -> new"
  delta: number | null; // signed, continuous only
  oldValue: number | string;
  newValue: number | string;
}

export function formatNumber(v: number): string {
  if (Number.isInteger(v)) return String(v);
  const abs = Math.abs(v);
  if (abs !== 0 && (abs < 1e-4 || abs >= 1e7)) return v.toExponential(3);
  return String(Number(v.toFixed(4)));
}

export function diffRows(
  schema: SchemaDocument,
  source: RawInstance,
  counterfactual: RawInstance
): DiffRow[] {
  const rows: DiffRow[] = [];
  for (const f of schema.features) {
    const a = source[f.name];
    const b = counterfactual[f.name];
    if (f.kind === "continuous") {
      const x = Number(a);
      const y = Number(b);
      const scale = Math.max(1, Math.abs(x));
      const changed = Math.abs(y - x) > SAME_TOL * scale;
      rows.push({
        feature: f.name,
        kind: "continuous",
        changed,
        display: changed ? `${formatNumber(x)} -> ${formatNumber(y)}` : "=",
        delta: changed ? y - x : null,
        oldValue: x,
        newValue: y,
      });
    } else {
      const changed = a !== b;
      rows.push({
        feature: f.name,
        kind: "categorical",
        changed,
        display: changed ? `${String(a)} -> ${String(b)}` : "=",
        delta: null,
        oldValue: String(a),
        newValue: String(b),
      });
    }
  }
  return rows;
}

export function changedFeatures(rows: DiffRow[]): string[] {
  return rows.filter((r) => r.changed).map((r) => r.feature);
}

/** Rows for one alternative tab. The service's diverse list is sorted by
 *  objective and its first entry is the winner, so tab i maps straight onto
 *  diverse[i]; a result with no diverse entries still shows the winner. */
export function rowsForAlternative(
  schema: SchemaDocument,
  source: RawInstance,
  result: ResultDocument,
  alternative: number
): DiffRow[] | null {
  if (result.status !== "found") return null;
  const raw = result.diverse[alternative]?.raw ?? (alternative === 0 ? result.raw : null);
  if (!raw) return null;
  return diffRows(schema, source, raw);
}
