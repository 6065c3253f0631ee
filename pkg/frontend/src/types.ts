// Documents exchanged with the counterfactual service. These mirror the JSON
// the server produces and consumes; the explorer never invents fields of its
// own, so a shape mismatch here is a bug against the live route table.

export type FeatureKind = "continuous" | "categorical";
export type MonotoneDirection = "nondecreasing" | "nonincreasing";

export interface ContinuousFeature {
  name: string;
  kind: "continuous";
  lower?: number;
  upper?: number;
  immutable_by_default?: boolean;
  monotone?: MonotoneDirection;
}

export interface CategoricalFeature {
  name: string;
  kind: "categorical";
  categories: string[];
  immutable_by_default?: boolean;
}

export type FeatureDecl = ContinuousFeature | CategoricalFeature;

export interface SchemaDocument {
  features: FeatureDecl[];
  classes: string[];
}

export interface LeafSummary {
  id: number;
  label: number;
  class_name?: string;
}

export interface TreeInfo {
  id: string;
  kind: "axis_aligned" | "oblique";
  classes: number;
  class_names: string[] | null;
  schema: SchemaDocument;
  leaves: LeafSummary[];
  decision_count: number;
}

export type RawValue = number | string;
export type RawInstance = Record<string, RawValue>;

export interface PredictResponse {
  label: number;
  leaf: number;
  class_name?: string;
}

// -- request side -----------------------------------------------------------

export interface TargetDocument {
  class?: number;
  classes?: number[];
  class_costs?: number[];
  allow_same_class?: boolean;
}

export type CostVariant = "l1" | "l2" | "quadratic" | "combination";

export interface CostDocument {
  variant: CostVariant;
  weights?: number[];
  q_matrix?: number[][] | { grid: [number, number]; diag?: number; neighbor?: number };
  terms?: { coefficient: number; cost: CostDocument }[];
}

export interface ConstraintDocument {
  freeze?: string[];
  bounds?: Record<string, [number, number]>;
  monotone?: Record<string, MonotoneDirection>;
  max_delta?: Record<string, number>;
  epsilon?: number;
}

export interface ExplainRequest {
  instance: RawInstance;
  target: TargetDocument;
  cost?: CostDocument;
  constraints?: ConstraintDocument;
  epsilon?: number;
  diverse_k?: number;
}

// -- response side ----------------------------------------------------------

export interface LedgerEntry {
  leaf: number;
  status: string; // optimal | infeasible | unbounded | dropped | routing_failed | error:<Name>
  objective: number | null;
  millis: number;
}

export interface DiverseEntry {
  leaf: number;
  x_star: number[];
  raw: RawInstance;
  objective: number;
  boundary_adjusted: boolean;
}

export interface ResultDocument {
  status: "found" | "no_feasible_leaf";
  x_star: number[] | null;
  raw: RawInstance | null;
  objective: number | null;
  leaf: number | null;
  boundary_adjusted: boolean;
  diverse: DiverseEntry[];
  ledger: LedgerEntry[];
  certificates: { active_rows: number[]; iterations: number; kkt_residual: number } | null;
}

export interface ServiceError {
  error: string;
}
