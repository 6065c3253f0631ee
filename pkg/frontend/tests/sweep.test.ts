import { describe, expect, it } from "vitest";

import { chartPoints, polylinePath } from "../src/sweep.js";
import type { SweepPoint } from "../src/state.js";

const geom = { width: 200, height: 100, pad: 10 };

describe("chartPoints", () => {
  it("plots found points left to right with objective increasing upward", () => {
    const sweep: SweepPoint[] = [
      { epsilon: 0, objective: 1, status: "found" },
      { epsilon: 0.1, objective: 2, status: "found" },
      { epsilon: 0.2, objective: 4, status: "found" },
    ];
    const pts = chartPoints(sweep, geom);
    expect(pts.length).toBe(3);
    expect(pts[0]!.x).toBeLessThan(pts[1]!.x);
    expect(pts[1]!.x).toBeLessThan(pts[2]!.x);
    // SVG y grows downward, so larger objectives sit higher (smaller y)
    expect(pts[0]!.y).toBeGreaterThan(pts[1]!.y);
    expect(pts[1]!.y).toBeGreaterThan(pts[2]!.y);
  });

  it("drops misses and handles an all-miss sweep", () => {
    const sweep: SweepPoint[] = [
      { epsilon: 0, objective: 1, status: "found" },
      { epsilon: 0.5, objective: null, status: "no_feasible_leaf" },
    ];
    expect(chartPoints(sweep, geom).length).toBe(1);
    expect(chartPoints([{ epsilon: 0, objective: null, status: "no_feasible_leaf" }], geom)).toEqual([]);
  });

  it("stays inside the padded box", () => {
    const sweep: SweepPoint[] = [
      { epsilon: 0, objective: 3, status: "found" },
      { epsilon: 1, objective: 9, status: "found" },
    ];
    for (const p of chartPoints(sweep, geom)) {
      expect(p.x).toBeGreaterThanOrEqual(geom.pad);
      expect(p.x).toBeLessThanOrEqual(geom.width - geom.pad);
      expect(p.y).toBeGreaterThanOrEqual(geom.pad);
      expect(p.y).toBeLessThanOrEqual(geom.height - geom.pad);
    }
  });
});

describe("polylinePath", () => {
  it("serializes points for the svg polyline attribute", () => {
    const sweep: SweepPoint[] = [
      { epsilon: 0, objective: 1, status: "found" },
      { epsilon: 1, objective: 2, status: "found" },
    ];
    const path = polylinePath(chartPoints(sweep, geom));
    expect(path).toMatch(/^\d+(\.\d)?,\d+(\.\d)? \d+(\.\d)?,\d+(\.\d)?$/);
  });
});
