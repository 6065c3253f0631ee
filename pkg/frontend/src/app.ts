// DOM wiring: renders the panels from the store and translates control
// events into store edits and service calls. One explain request per Apply
// click, at most one in flight; the sweep button runs a scheduled series.

import { ApiError, Client } from "./api.js";
import { buildExplainRequest, sanitizeInstance } from "./requests.js";
import type { TargetSelection } from "./requests.js";
import { Store } from "./state.js";
import type { SweepPoint } from "./state.js";
import {
  costPanelHTML,
  featurePanelHTML,
  historyHTML,
  resultPanelHTML,
  sweepHTML,
  targetPanelHTML,
} from "./render.js";
import { DEFAULT_SCHEDULE } from "./sweep.js";
import type { RawInstance, SchemaDocument } from "./types.js";

export function defaultInstance(schema: SchemaDocument): RawInstance {
  const out: RawInstance = {};
  for (const f of schema.features) {
    if (f.kind === "continuous") {
      const lo = f.lower ?? 0;
      const hi = f.upper ?? lo + 1;
      out[f.name] = (lo + hi) / 2;
    } else {
      out[f.name] = f.categories[0] as string;
    }
  }
  return out;
}

function byId(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

export class App {
  readonly store = new Store();
  readonly client: Client;
  private alternative = 0;
  private pendingPrediction: Promise<void> | null = null;

  constructor(base = "") {
    this.client = new Client(base);
  }

  start(): void {
    this.store.subscribe(() => this.render());
    this.wire();
    this.render();
    void this.client
      .health()
      .then((h) => {
        byId("health").textContent = `service ok, ${h.trees} tree(s) loaded`;
      })
      .catch(() => {
        byId("health").textContent = "service unreachable";
      });
  }

  // -- rendering --------------------------------------------------------------

  private render(): void {
    const state = this.store.get();
    byId("feature-panel").innerHTML = featurePanelHTML(state);
    byId("target-panel").innerHTML = targetPanelHTML(state);
    byId("cost-panel").innerHTML = costPanelHTML(state);
    byId("result-panel").innerHTML = resultPanelHTML(state, this.alternative);
    byId("history-panel").innerHTML = historyHTML(state.history);
    byId("sweep-panel").innerHTML = sweepHTML(state);
    const apply = byId("apply") as HTMLButtonElement;
    apply.disabled = state.busy || !state.tree;
    apply.textContent = state.busy ? "solving..." : "Apply";
    (byId("sweep") as HTMLButtonElement).disabled = state.busy || !state.tree;
    (byId("export") as HTMLButtonElement).disabled = !state.history.length;
    const err = byId("error");
    err.textContent = state.error ?? "";
    err.hidden = !state.error;
    const treeLabel = state.tree
      ? `${state.tree.kind} tree ${state.tree.id}, ${state.tree.leaves.length} leaves`
      : "no tree loaded";
    byId("tree-label").textContent = treeLabel;
  }

  // -- service flows ------------------------------------------------------------

  async loadTreeDocument(doc: unknown): Promise<void> {
    try {
      const { id } = await this.client.uploadTree(doc);
      const info = await this.client.treeInfo(id);
      const instance = defaultInstance(info.schema);
      this.store.setTree(info, instance);
      await this.refreshPrediction();
    } catch (e) {
      this.store.setError(e instanceof Error ? e.message : String(e));
    }
  }

  refreshPrediction(): Promise<void> {
    const run = async (): Promise<void> => {
      const s = this.store.get();
      if (!s.tree) return;
      try {
        const p = await this.client.predict(s.tree.id, sanitizeInstance(s.tree.schema, s.instance));
        this.store.setSourceLabel(p.label);
      } catch (e) {
        this.store.setError(e instanceof Error ? e.message : String(e));
      }
    };
    this.pendingPrediction = run().finally(() => {
      this.pendingPrediction = null;
    });
    return this.pendingPrediction;
  }

  buildRequest(epsilonOverride?: number) {
    const s = this.store.get();
    if (!s.tree) throw new Error("no tree loaded");
    return buildExplainRequest({
      schema: s.tree.schema,
      instance: s.instance,
      target: s.target,
      sourceLabel: s.sourceLabel ?? -1,
      cost: s.cost,
      toggles: s.toggles,
      epsilon: epsilonOverride ?? s.epsilon,
      diverseK: s.diverseK,
    });
  }

  async apply(): Promise<void> {
    // the same-class target guard needs the source label, so an instance
    // edit's prediction must land before the request body is built
    if (this.pendingPrediction) await this.pendingPrediction;
    const s = this.store.get();
    if (!s.tree || !this.store.beginSolve()) return;
    const request = this.buildRequest();
    try {
      const result = await this.client.explain(s.tree.id, request);
      this.alternative = 0;
      this.store.finishSolve(request, result);
    } catch (e) {
      const msg = e instanceof ApiError ? `${e.status}: ${e.message}` : String(e);
      this.store.failSolve(msg);
    }
  }

  /** One explain per epsilon in the schedule, sequentially (the service
   *  result for a larger margin is never cheaper; the chart shows that). */
  async sweep(schedule: number[] = DEFAULT_SCHEDULE): Promise<void> {
    if (this.pendingPrediction) await this.pendingPrediction;
    const s = this.store.get();
    if (!s.tree || !this.store.beginSolve()) return;
    const points: SweepPoint[] = [];
    try {
      for (const eps of schedule) {
        const req = this.buildRequest(eps);
        const res = await this.client.explain(s.tree.id, req);
        points.push({ epsilon: eps, objective: res.objective, status: res.status });
      }
      this.store.setSweep(points);
    } catch (e) {
      const msg = e instanceof ApiError ? `${e.status}: ${e.message}` : String(e);
      this.store.failSolve(msg);
    }
  }

  exportSession(): void {
    const blob = new Blob([this.store.exportBundle()], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = "cftree-session.json";
    a.click();
    URL.revokeObjectURL(a.href);
  }

  // -- event wiring ---------------------------------------------------------------

  private wire(): void {
    byId("apply").addEventListener("click", () => void this.apply());
    byId("sweep").addEventListener("click", () => void this.sweep());
    byId("export").addEventListener("click", () => this.exportSession());

    const upload = byId("tree-upload") as HTMLInputElement;
    upload.addEventListener("change", () => {
      const file = upload.files?.[0];
      if (!file) return;
      void file.text().then((text) => {
        try {
          return this.loadTreeDocument(JSON.parse(text));
        } catch {
          this.store.setError("not a JSON document");
          return;
        }
      });
    });

    document.addEventListener("change", (ev) => this.onChange(ev));
    document.addEventListener("click", (ev) => {
      const el = ev.target instanceof Element ? ev.target.closest("[data-alternative]") : null;
      if (el) {
        this.alternative = Number(el.getAttribute("data-alternative") ?? 0);
        this.render();
      }
    });
  }

  private onChange(ev: Event): void {
    const el = ev.target;
    if (!(el instanceof HTMLInputElement) && !(el instanceof HTMLSelectElement)) return;
    const s = this.store.get();

    const instanceName = el.getAttribute("data-instance");
    if (instanceName) {
      const value = el instanceof HTMLSelectElement ? el.value : Number(el.value);
      this.store.edit({ instance: { ...s.instance, [instanceName]: value } });
      void this.refreshPrediction();
      return;
    }

    const toggleKind = el.getAttribute("data-toggle");
    const featureName = el.getAttribute("data-feature");
    if (toggleKind && featureName) {
      const prev = s.toggles[featureName];
      if (!prev) return;
      const next = { ...prev, bounds: { ...prev.bounds } };
      if (toggleKind === "frozen" && el instanceof HTMLInputElement) next.frozen = el.checked;
      if (toggleKind === "lower") next.bounds.lower = el.value === "" ? null : Number(el.value);
      if (toggleKind === "upper") next.bounds.upper = el.value === "" ? null : Number(el.value);
      if (toggleKind === "monotone") {
        next.monotone = el.value === "" ? null : (el.value as "nondecreasing" | "nonincreasing");
      }
      if (toggleKind === "max_delta") next.max_delta = el.value === "" ? null : Number(el.value);
      this.store.edit({ toggles: { ...s.toggles, [featureName]: next } });
      return;
    }

    if (el instanceof HTMLInputElement && el.name === "target-mode") {
      const classCount = s.tree?.classes ?? 2;
      let target: TargetSelection;
      if (el.value === "subset") target = { mode: "subset", classes: [] };
      else if (el.value === "class_costs") {
        target = { mode: "class_costs", costs: new Array(classCount).fill(0) };
      } else target = { mode: "single", class: 1 };
      this.store.edit({ target });
      return;
    }
    if (el.hasAttribute("data-target-single")) {
      this.store.edit({ target: { mode: "single", class: Number(el.value) } });
      return;
    }
    if (el.hasAttribute("data-target-subset") && el instanceof HTMLInputElement) {
      const y = Number(el.getAttribute("data-target-subset"));
      const current = s.target.mode === "subset" ? s.target.classes : [];
      const classes = el.checked ? [...current, y] : current.filter((c) => c !== y);
      this.store.edit({ target: { mode: "subset", classes } });
      return;
    }
    if (el.hasAttribute("data-target-cost")) {
      const y = Number(el.getAttribute("data-target-cost"));
      const classCount = s.tree?.classes ?? 2;
      const costs =
        s.target.mode === "class_costs" ? [...s.target.costs] : new Array(classCount).fill(0);
      costs[y - 1] = Number(el.value);
      this.store.edit({ target: { mode: "class_costs", costs } });
      return;
    }

    if (el.hasAttribute("data-cost-variant")) {
      this.store.edit({ cost: { variant: el.value as "l1" | "l2", weights: null } });
      return;
    }
    if (el.hasAttribute("data-epsilon-slider") || el.hasAttribute("data-epsilon-number")) {
      const eps = Math.max(0, Number(el.value) || 0);
      this.store.edit({ epsilon: eps });
      return;
    }
    if (el.hasAttribute("data-diverse-k")) {
      this.store.edit({ diverseK: Math.max(0, Math.round(Number(el.value) || 0)) });
    }
  }
}
