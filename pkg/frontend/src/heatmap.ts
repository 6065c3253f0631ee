// Grid rendering for image-shaped instances: when every feature is
// continuous and the count is a perfect square (at least 2x2), the source
// renders as a grayscale grid and the counterfactual as a signed-delta
// overlay, red for positive edits and blue for negative ones.

import type { RawInstance, SchemaDocument } from "./types.js";

export interface GridShape {
  side: number;
  names: string[]; // row-major feature order as declared
}

export function detectGrid(schema: SchemaDocument): GridShape | null {
  const feats = schema.features;
  if (feats.some((f) => f.kind !== "continuous")) return null;
  const side = Math.round(Math.sqrt(feats.length));
  if (side < 2 || side * side !== feats.length) return null;
  return { side, names: feats.map((f) => f.name) };
}

export interface HeatCell {
  row: number;
  col: number;
  value: number; // source value, normalized to [0, 1] over the grid
  delta: number; // signed edit, normalized to [-1, 1] over the grid
}

export function heatCells(
  shape: GridShape,
  source: RawInstance,
  counterfactual: RawInstance | null
): HeatCell[] {
  const values = shape.names.map((n) => Number(source[n]) || 0);
  const deltas = shape.names.map((n, i) =>
    counterfactual ? (Number(counterfactual[n]) || 0) - (values[i] as number) : 0
  );
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    lo = Math.min(lo, v);
    hi = Math.max(hi, v);
  }
  const span = hi > lo ? hi - lo : 1;
  const maxAbs = Math.max(1e-12, ...deltas.map((d) => Math.abs(d)));
  return shape.names.map((_, i) => ({
    row: Math.floor(i / shape.side),
    col: i % shape.side,
    value: ((values[i] as number) - lo) / span,
    delta: (deltas[i] as number) / maxAbs,
  }));
}

/** rgba() overlay color for a normalized signed delta. */
export function deltaColor(delta: number): string {
  const a = Math.min(1, Math.abs(delta));
  if (a < 1e-9) return "rgba(0,0,0,0)";
  return delta > 0 ? `rgba(220,50,32,${(0.85 * a).toFixed(3)})` : `rgba(0,90,181,${(0.85 * a).toFixed(3)})`;
}
