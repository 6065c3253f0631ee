// Builds explain request bodies from schema-derived controls.
//
// The server rejects instances outside the schema and constraint sets that
// are syntactically contradictory (empty bound intervals, monotone against
// declared direction, caps that exclude every admissible value). Everything
// the explorer submits passes through here first, and this module's job is
// to make those rejections unreachable: values are clamped into the schema,
// per-feature toggles are reconciled against each other, and targets are
// widened with allow_same_class exactly when the selection would otherwise
// be empty. The math stays on the server; this is bookkeeping only.

import type {
  ConstraintDocument,
  ContinuousFeature,
  CostDocument,
  ExplainRequest,
  FeatureDecl,
  MonotoneDirection,
  RawInstance,
  SchemaDocument,
} from "./types.js";

export interface FeatureToggles {
  frozen: boolean;
  bounds: { lower: number | null; upper: number | null };
  monotone: MonotoneDirection | null;
  max_delta: number | null;
}

export type ToggleMap = Record<string, FeatureToggles>;

export type TargetSelection =
  | { mode: "single"; class: number }
  | { mode: "subset"; classes: number[] }
  | { mode: "class_costs"; costs: number[] };

export interface CostSelection {
  variant: "l1" | "l2";
  weights: number[] | null; // per encoded coordinate; see expandWeights
}

export function defaultToggles(): FeatureToggles {
  return { frozen: false, bounds: { lower: null, upper: null }, monotone: null, max_delta: null };
}

export function schemaBounds(f: ContinuousFeature): [number, number] {
  return [f.lower ?? -Infinity, f.upper ?? Infinity];
}

function clamp(v: number, lo: number, hi: number): number {
  return Math.min(Math.max(v, lo), hi);
}

/** Every declared feature present, continuous values clamped into the
 *  schema interval, categoricals coerced onto the declared list. */
export function sanitizeInstance(schema: SchemaDocument, raw: RawInstance): RawInstance {
  const out: RawInstance = {};
  for (const f of schema.features) {
    const v = raw[f.name];
    if (f.kind === "continuous") {
      const [lo, hi] = schemaBounds(f);
      let num = typeof v === "number" && Number.isFinite(v) ? v : Number(v);
      if (!Number.isFinite(num)) num = clamp(0, lo, hi);
      out[f.name] = clamp(num, lo, hi);
    } else {
      const cats = f.categories;
      out[f.name] = typeof v === "string" && cats.includes(v) ? v : (cats[0] as string);
    }
  }
  return out;
}

/** Target document; widens with allow_same_class when the selection would
 *  otherwise collapse to nothing after the source class is dropped. */
export function buildTarget(
  sel: TargetSelection,
  sourceLabel: number,
  classCount: number
): ExplainRequest["target"] {
  if (sel.mode === "single") {
    const y = clamp(Math.round(sel.class), 1, classCount);
    return y === sourceLabel ? { class: y, allow_same_class: true } : { class: y };
  }
  if (sel.mode === "subset") {
    const ys = [...new Set(sel.classes.map((c) => clamp(Math.round(c), 1, classCount)))].sort(
      (a, b) => a - b
    );
    const pool = ys.length ? ys : [sourceLabel === 1 ? Math.min(2, classCount) : 1];
    const onlySource = pool.every((y) => y === sourceLabel);
    return onlySource ? { classes: pool, allow_same_class: true } : { classes: pool };
  }
  const costs = Array.from({ length: classCount }, (_, i) => {
    const c = sel.costs[i];
    return typeof c === "number" && Number.isFinite(c) && c >= 0 ? c : 0;
  });
  return { class_costs: costs };
}

export function buildCost(sel: CostSelection | null): CostDocument | undefined {
  if (!sel) return undefined;
  if (!sel.weights) return { variant: sel.variant };
  const weights = sel.weights.map((w) => (Number.isFinite(w) && w >= 0 ? w : 1));
  return { variant: sel.variant, weights };
}

interface EffectiveInterval {
  lo: number;
  hi: number;
}

/** Reconcile one feature's toggles into a contradiction-free fragment.
 *  Order matters: bounds are clamped into the schema first, then the
 *  monotone half-line is kept reachable, then the change cap is widened
 *  until the admissible interval is nonempty. */
function continuousFragment(
  f: ContinuousFeature,
  v: number,
  t: FeatureToggles
): {
  bounds?: [number, number];
  monotone?: MonotoneDirection;
  max_delta?: number;
} {
  const [slo, shi] = schemaBounds(f);
  const frag: { bounds?: [number, number]; monotone?: MonotoneDirection; max_delta?: number } = {};

  if (t.bounds.lower !== null || t.bounds.upper !== null) {
    let lo = t.bounds.lower ?? slo;
    let hi = t.bounds.upper ?? shi;
    if (lo > hi) [lo, hi] = [hi, lo];
    frag.bounds = [clamp(lo, slo, shi), clamp(hi, slo, shi)];
  }

  // the schema's declared direction is not repeated in the request; only a
  // user-chosen direction compatible with it is sent. The declared one still
  // constrains the server, so it participates in the coherence math below.
  const declared = f.monotone ?? null;
  const direction = t.monotone && (!declared || declared === t.monotone) ? t.monotone : null;
  if (direction) frag.monotone = direction;
  const effDirection = direction ?? declared;

  // keep the monotone half-line reachable from inside the bound interval
  if (effDirection && frag.bounds) {
    if (effDirection === "nondecreasing" && frag.bounds[1] < v) {
      frag.bounds = [frag.bounds[0], clamp(v, slo, shi)];
    } else if (effDirection === "nonincreasing" && frag.bounds[0] > v) {
      frag.bounds = [clamp(v, slo, shi), frag.bounds[1]];
    }
  }

  let eff: EffectiveInterval = frag.bounds
    ? { lo: frag.bounds[0], hi: frag.bounds[1] }
    : { lo: slo, hi: shi };
  if (effDirection === "nondecreasing") eff = { lo: Math.max(eff.lo, v), hi: eff.hi };
  if (effDirection === "nonincreasing") eff = { lo: eff.lo, hi: Math.min(eff.hi, v) };

  if (t.max_delta !== null) {
    let cap = Math.abs(t.max_delta);
    // distance from the source value to the admissible interval; the cap
    // must at least reach it or no value satisfies both constraints
    const dist = v < eff.lo ? eff.lo - v : v > eff.hi ? v - eff.hi : 0;
    cap = Math.max(cap, dist);
    frag.max_delta = cap;
  }

  return frag;
}

/** Constraint document from per-feature toggles. Only schema features are
 *  consulted; stray toggle keys are dropped, categorical features contribute
 *  freeze only, frozen features contribute nothing else. */
export function buildConstraints(
  schema: SchemaDocument,
  instance: RawInstance,
  toggles: ToggleMap,
  epsilon: number
): ConstraintDocument | undefined {
  const freeze: string[] = [];
  const bounds: Record<string, [number, number]> = {};
  const monotone: Record<string, MonotoneDirection> = {};
  const max_delta: Record<string, number> = {};

  for (const f of schema.features) {
    const t = toggles[f.name];
    if (!t) continue;
    if (t.frozen) {
      // immutable_by_default features are frozen server-side already; the
      // explicit entry is harmless and keeps the request self-describing
      freeze.push(f.name);
      continue;
    }
    if (f.kind !== "continuous") continue;
    const v = instance[f.name];
    const frag = continuousFragment(f, typeof v === "number" ? v : 0, t);
    if (frag.bounds) bounds[f.name] = frag.bounds;
    if (frag.monotone) monotone[f.name] = frag.monotone;
    if (frag.max_delta !== undefined) max_delta[f.name] = frag.max_delta;
  }

  const doc: ConstraintDocument = {};
  if (freeze.length) doc.freeze = freeze;
  if (Object.keys(bounds).length) doc.bounds = bounds;
  if (Object.keys(monotone).length) doc.monotone = monotone;
  if (Object.keys(max_delta).length) doc.max_delta = max_delta;
  const eps = Number.isFinite(epsilon) && epsilon > 0 ? epsilon : 0;
  if (eps > 0) doc.epsilon = eps;
  return Object.keys(doc).length ? doc : undefined;
}

export function buildExplainRequest(args: {
  schema: SchemaDocument;
  instance: RawInstance;
  target: TargetSelection;
  sourceLabel: number;
  cost: CostSelection | null;
  toggles: ToggleMap;
  epsilon: number;
  diverseK?: number;
}): ExplainRequest {
  const instance = sanitizeInstance(args.schema, args.instance);
  const classCount = args.schema.classes.length;
  const req: ExplainRequest = {
    instance,
    target: buildTarget(args.target, args.sourceLabel, classCount),
  };
  const cost = buildCost(args.cost);
  if (cost) req.cost = cost;
  const constraints = buildConstraints(args.schema, instance, args.toggles, args.epsilon);
  if (constraints) req.constraints = constraints;
  if (args.diverseK !== undefined && args.diverseK >= 0) {
    req.diverse_k = Math.round(args.diverseK);
  }
  return req;
}

/** Per-coordinate weight vector for a weighted distance: continuous features
 *  contribute one weight, categorical blocks repeat theirs across the block
 *  (the server costs encoded coordinates, not raw features). */
export function expandWeights(schema: SchemaDocument, perFeature: Record<string, number>): number[] {
  const out: number[] = [];
  for (const f of schema.features) {
    const w = perFeature[f.name];
    const weight = typeof w === "number" && Number.isFinite(w) && w >= 0 ? w : 1;
    const width = f.kind === "continuous" ? 1 : f.categories.length;
    for (let i = 0; i < width; i++) out.push(weight);
  }
  return out;
}
