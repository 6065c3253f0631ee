// Margin sweep: the explorer re-runs the same query across an epsilon
// schedule and charts objective against epsilon. The service guarantees
// objectives are nondecreasing along a growing schedule; the chart only
// plots what came back.

import type { SweepPoint } from "./state.js";

export const DEFAULT_SCHEDULE = [0, 0.02, 0.05, 0.1, 0.2, 0.4];

export interface ChartGeometry {
  width: number;
  height: number;
  pad: number;
}

export interface ChartPoint {
  x: number;
  y: number;
  epsilon: number;
  objective: number;
}

/** Map found sweep points into SVG coordinates (y grows downward). */
export function chartPoints(points: SweepPoint[], geom: ChartGeometry): ChartPoint[] {
  const found = points.filter(
    (p): p is SweepPoint & { objective: number } =>
      p.status === "found" && p.objective !== null && Number.isFinite(p.objective)
  );
  if (!found.length) return [];
  const eps = found.map((p) => p.epsilon);
  const obj = found.map((p) => p.objective);
  const [e0, e1] = [Math.min(...eps), Math.max(...eps)];
  const [o0, o1] = [Math.min(...obj), Math.max(...obj)];
  const eSpan = e1 > e0 ? e1 - e0 : 1;
  const oSpan = o1 > o0 ? o1 - o0 : 1;
  const innerW = geom.width - 2 * geom.pad;
  const innerH = geom.height - 2 * geom.pad;
  return found.map((p) => ({
    x: geom.pad + ((p.epsilon - e0) / eSpan) * innerW,
    y: geom.height - geom.pad - ((p.objective - o0) / oSpan) * innerH,
    epsilon: p.epsilon,
    objective: p.objective,
  }));
}

export function polylinePath(points: ChartPoint[]): string {
  return points.map((p) => `${p.x.toFixed(1)},${p.y.toFixed(1)}`).join(" ");
}
