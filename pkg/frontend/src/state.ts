// Session state for the explorer. Pure data plus a tiny pub/sub so the DOM
// layer can re-render; no network and no DOM in this module.
//
// Invariants the rest of the app leans on:
//   - history is append-only: entries record (request, result) pairs in the
//     order they were applied and are never mutated or removed;
//   - dirty tracks whether any control changed since the shown result, so a
//     stale result is always labeled as such;
//   - at most one explain request is in flight (busy).

import type { ExplainRequest, RawInstance, ResultDocument, TreeInfo } from "./types.js";
import type { CostSelection, TargetSelection, ToggleMap } from "./requests.js";
import { defaultToggles } from "./requests.js";

export interface HistoryEntry {
  seq: number;
  at: string; // ISO timestamp
  request: ExplainRequest;
  result: ResultDocument;
}

export interface SweepPoint {
  epsilon: number;
  objective: number | null;
  status: string;
}

export interface ExplorerState {
  tree: TreeInfo | null;
  instance: RawInstance;
  sourceLabel: number | null;
  target: TargetSelection;
  cost: CostSelection | null;
  toggles: ToggleMap;
  epsilon: number;
  diverseK: number;
  result: ResultDocument | null;
  history: HistoryEntry[];
  sweep: SweepPoint[];
  dirty: boolean;
  busy: boolean;
  error: string | null;
}

export type Listener = (state: ExplorerState) => void;

export class Store {
  private state: ExplorerState;
  private listeners: Listener[] = [];
  private seq = 0;

  constructor() {
    this.state = {
      tree: null,
      instance: {},
      sourceLabel: null,
      target: { mode: "single", class: 1 },
      cost: { variant: "l2", weights: null },
      toggles: {},
      epsilon: 0,
      diverseK: 3,
      result: null,
      history: [],
      sweep: [],
      dirty: false,
      busy: false,
      error: null,
    };
  }

  get(): ExplorerState {
    return this.state;
  }

  subscribe(fn: Listener): () => void {
    this.listeners.push(fn);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== fn);
    };
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.state);
  }

  /** Replace the loaded tree; controls reset because they are schema-derived. */
  setTree(tree: TreeInfo, instance: RawInstance): void {
    const toggles: ToggleMap = {};
    for (const f of tree.schema.features) {
      const t = defaultToggles();
      if (f.immutable_by_default) t.frozen = true;
      toggles[f.name] = t;
    }
    this.state = {
      ...this.state,
      tree,
      instance,
      sourceLabel: null,
      toggles,
      target: { mode: "single", class: 1 },
      result: null,
      sweep: [],
      dirty: false,
      error: null,
      // history intentionally survives a tree switch: it is the session audit
      // trail and each entry carries its own request document
    };
    this.emit();
  }

  setSourceLabel(label: number): void {
    this.state = { ...this.state, sourceLabel: label };
    this.emit();
  }

  /** Any control edit marks the shown result stale. */
  edit(patch: Partial<Pick<ExplorerState, "instance" | "target" | "cost" | "toggles" | "epsilon" | "diverseK">>): void {
    this.state = { ...this.state, ...patch, dirty: true };
    this.emit();
  }

  setError(message: string | null): void {
    this.state = { ...this.state, error: message };
    this.emit();
  }

  beginSolve(): boolean {
    if (this.state.busy) return false;
    this.state = { ...this.state, busy: true, error: null };
    this.emit();
    return true;
  }

  /** Record an applied (request, result) pair. Clears dirty: the shown
   *  result now corresponds to the current controls. */
  finishSolve(request: ExplainRequest, result: ResultDocument): HistoryEntry {
    const entry: HistoryEntry = {
      seq: ++this.seq,
      at: new Date().toISOString(),
      request,
      result,
    };
    this.state = {
      ...this.state,
      busy: false,
      dirty: false,
      result,
      history: [...this.state.history, entry],
    };
    this.emit();
    return entry;
  }

  failSolve(message: string): void {
    this.state = { ...this.state, busy: false, error: message };
    this.emit();
  }

  setSweep(points: SweepPoint[]): void {
    this.state = { ...this.state, sweep: points, busy: false };
    this.emit();
  }

  /** The exportable session bundle: the audit trail of the negotiation. */
  exportBundle(): string {
    const s = this.state;
    return JSON.stringify(
      {
        kind: "cftree-explorer-session",
        exported_at: new Date().toISOString(),
        tree_id: s.tree?.id ?? null,
        history: s.history,
      },
      null,
      1
    );
  }
}
