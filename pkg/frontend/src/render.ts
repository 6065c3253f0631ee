// HTML template builders. Pure string functions from state fragments; all
// event wiring lives in app.ts. Every number displayed here comes from a
// service response or the user's own inputs.

import { changedFeatures, diffRows, formatNumber, rowsForAlternative } from "./diff.js";
import { deltaColor, detectGrid, heatCells } from "./heatmap.js";
import type { ExplorerState, HistoryEntry } from "./state.js";
import { chartPoints, polylinePath } from "./sweep.js";
import type { FeatureDecl, LedgerEntry, ResultDocument, TreeInfo } from "./types.js";

export function esc(s: unknown): string {
  return String(s)
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function classLabel(tree: TreeInfo, label: number): string {
  const names = tree.class_names;
  return names && names[label - 1] ? `${names[label - 1]} (${label})` : String(label);
}

// -- feature panel ------------------------------------------------------------

function featureRow(f: FeatureDecl, state: ExplorerState): string {
  const t = state.toggles[f.name];
  const v = state.instance[f.name];
  const frozen = t?.frozen ?? false;
  const lockTitle = f.immutable_by_default ? "immutable by default" : "freeze: must not change";
  const lock = `<label class="lock" title="${esc(lockTitle)}">
      <input type="checkbox" data-toggle="frozen" data-feature="${esc(f.name)}" ${frozen ? "checked" : ""}>
      <span>&#128274;</span></label>`;

  if (f.kind === "categorical") {
    const opts = f.categories
      .map((c) => `<option value="${esc(c)}" ${c === v ? "selected" : ""}>${esc(c)}</option>`)
      .join("");
    return `<div class="feature-row" data-kind="categorical">
      <div class="feature-head"><span class="feature-name">${esc(f.name)}</span>${lock}</div>
      <select data-instance="${esc(f.name)}" ${frozen ? "disabled" : ""}>${opts}</select>
    </div>`;
  }

  const lower = f.lower !== undefined ? `min="${f.lower}"` : "";
  const upper = f.upper !== undefined ? `max="${f.upper}"` : "";
  const declared = f.monotone
    ? `<span class="declared" title="declared in the schema">${f.monotone === "nondecreasing" ? "&uarr; only" : "&darr; only"}</span>`
    : "";
  const dir = t?.monotone ?? "";
  const monotoneOptions = f.monotone
    ? `<option value="">(schema: ${esc(f.monotone)})</option>
       <option value="${esc(f.monotone)}" ${dir === f.monotone ? "selected" : ""}>${esc(f.monotone)}</option>`
    : `<option value="">any direction</option>
       <option value="nondecreasing" ${dir === "nondecreasing" ? "selected" : ""}>nondecreasing</option>
       <option value="nonincreasing" ${dir === "nonincreasing" ? "selected" : ""}>nonincreasing</option>`;
  return `<div class="feature-row" data-kind="continuous">
    <div class="feature-head"><span class="feature-name">${esc(f.name)}</span>${declared}${lock}</div>
    <input type="number" step="any" ${lower} ${upper} data-instance="${esc(f.name)}"
           value="${typeof v === "number" ? v : ""}" ${frozen ? "disabled" : ""}>
    <div class="constraint-grid" ${frozen ? 'data-disabled="1"' : ""}>
      <input type="number" step="any" placeholder="lower" data-toggle="lower" data-feature="${esc(f.name)}"
             value="${t?.bounds.lower ?? ""}" ${frozen ? "disabled" : ""}>
      <input type="number" step="any" placeholder="upper" data-toggle="upper" data-feature="${esc(f.name)}"
             value="${t?.bounds.upper ?? ""}" ${frozen ? "disabled" : ""}>
      <select data-toggle="monotone" data-feature="${esc(f.name)}" ${frozen ? "disabled" : ""}>
        ${monotoneOptions}
      </select>
      <input type="number" step="any" min="0" placeholder="max |&Delta;|" data-toggle="max_delta"
             data-feature="${esc(f.name)}" value="${t?.max_delta ?? ""}" ${frozen ? "disabled" : ""}>
    </div>
  </div>`;
}

export function featurePanelHTML(state: ExplorerState): string {
  if (!state.tree) return "";
  return state.tree.schema.features.map((f) => featureRow(f, state)).join("");
}

// -- target and cost ----------------------------------------------------------

export function targetPanelHTML(state: ExplorerState): string {
  const tree = state.tree;
  if (!tree) return "";
  const t = state.target;
  const classes = Array.from({ length: tree.classes }, (_, i) => i + 1);
  const single = classes
    .map(
      (y) => `<option value="${y}" ${t.mode === "single" && t.class === y ? "selected" : ""}>
        ${esc(classLabel(tree, y))}</option>`
    )
    .join("");
  const subset = classes
    .map(
      (y) => `<label class="subset-item"><input type="checkbox" data-target-subset="${y}"
        ${t.mode === "subset" && t.classes.includes(y) ? "checked" : ""}> ${esc(classLabel(tree, y))}</label>`
    )
    .join("");
  const costs = classes
    .map((y) => {
      const val = t.mode === "class_costs" ? (t.costs[y - 1] ?? 0) : 0;
      return `<label class="subset-item">${esc(classLabel(tree, y))}
        <input type="number" step="any" min="0" data-target-cost="${y}" value="${val}"></label>`;
    })
    .join("");
  const src = state.sourceLabel;
  return `
    <div class="target-modes">
      <label><input type="radio" name="target-mode" value="single" ${t.mode === "single" ? "checked" : ""}> one class</label>
      <label><input type="radio" name="target-mode" value="subset" ${t.mode === "subset" ? "checked" : ""}> any of a set</label>
      <label><input type="radio" name="target-mode" value="class_costs" ${t.mode === "class_costs" ? "checked" : ""}> priced classes</label>
    </div>
    <div class="target-body">
      ${t.mode === "single" ? `<select data-target-single>${single}</select>` : ""}
      ${t.mode === "subset" ? `<div class="subset-list">${subset}</div>` : ""}
      ${t.mode === "class_costs" ? `<div class="subset-list">${costs}</div>` : ""}
    </div>
    ${src !== null ? `<p class="hint">source prediction: <b>${esc(classLabel(tree, src))}</b></p>` : ""}
  `;
}

export function costPanelHTML(state: ExplorerState): string {
  const variant = state.cost?.variant ?? "l2";
  return `
    <select data-cost-variant>
      <option value="l2" ${variant === "l2" ? "selected" : ""}>squared distance (l2)</option>
      <option value="l1" ${variant === "l1" ? "selected" : ""}>absolute distance (l1)</option>
    </select>
    <label class="eps">robustness margin &epsilon;
      <input type="range" min="0" max="0.5" step="0.01" value="${state.epsilon}" data-epsilon-slider>
      <input type="number" min="0" step="any" value="${state.epsilon}" data-epsilon-number>
    </label>
    <label class="eps">alternatives
      <input type="number" min="0" max="25" step="1" value="${state.diverseK}" data-diverse-k>
    </label>
  `;
}

// -- results ------------------------------------------------------------------

function ledgerHTML(ledger: LedgerEntry[]): string {
  const rows = ledger
    .map(
      (e) => `<tr>
        <td>${e.leaf}</td>
        <td class="status-${esc(e.status)}">${esc(e.status)}</td>
        <td class="num">${e.objective === null ? "&mdash;" : esc(formatNumber(e.objective))}</td>
        <td class="num">${e.millis.toFixed(2)}</td>
      </tr>`
    )
    .join("");
  return `<table class="ledger"><thead>
      <tr><th>leaf</th><th>status</th><th>objective</th><th>ms</th></tr>
    </thead><tbody>${rows}</tbody></table>`;
}

function diffTableHTML(state: ExplorerState, result: ResultDocument, alternative: number): string {
  const tree = state.tree;
  if (!tree) return "";
  const source = state.instance;
  const rows = rowsForAlternative(tree.schema, source, result, alternative);
  if (!rows) return "";
  const body = rows
    .map((r) => {
      if (!r.changed) {
        return `<tr class="same"><td>${esc(r.feature)}</td><td class="eq">=</td><td></td></tr>`;
      }
      const delta =
        r.delta === null
          ? ""
          : `<span class="${r.delta > 0 ? "pos" : "neg"}">${r.delta > 0 ? "+" : ""}${esc(formatNumber(r.delta))}</span>`;
      return `<tr class="changed"><td>${esc(r.feature)}</td><td>${esc(r.display)}</td><td class="num">${delta}</td></tr>`;
    })
    .join("");
  return `<table class="diff"><thead>
      <tr><th>feature</th><th>change</th><th>&Delta;</th></tr>
    </thead><tbody>${body}</tbody></table>`;
}

function heatmapHTML(state: ExplorerState, result: ResultDocument | null, alternative: number): string {
  const tree = state.tree;
  if (!tree) return "";
  const shape = detectGrid(tree.schema);
  if (!shape) return "";
  let cf = null;
  if (result && result.status === "found") {
    cf = result.diverse[alternative]?.raw ?? result.raw;
  }
  const cells = heatCells(shape, state.instance, cf);
  const divs = cells
    .map((c) => {
      const gray = Math.round(255 * (1 - c.value));
      return `<div class="heat-cell" style="grid-row:${c.row + 1};grid-column:${c.col + 1};
        background:rgb(${gray},${gray},${gray})">
        <div class="heat-overlay" style="background:${deltaColor(c.delta)}"></div></div>`;
    })
    .join("");
  return `<div class="heatmap" style="grid-template-columns:repeat(${shape.side},1fr)">${divs}</div>
    <p class="hint">red: positive edit, blue: negative edit</p>`;
}

export function resultPanelHTML(state: ExplorerState, alternative: number): string {
  const result = state.result;
  const tree = state.tree;
  if (!tree) return `<p class="hint">upload a tree to begin</p>`;
  if (!result) return `<p class="hint">no result yet; set a target and apply</p>`;

  const stale = state.dirty
    ? `<span class="badge stale" title="controls changed since this result">stale</span>`
    : "";

  if (result.status !== "found") {
    return `<div class="result-head"><span class="badge miss">no feasible leaf</span>${stale}</div>
      <p>No admissible point reaches the target under the current constraints.
         Per-leaf outcomes:</p>
      ${ledgerHTML(result.ledger)}`;
  }

  const tabs = result.diverse
    .map((d, i) => {
      const label = i === 0 ? "best" : `alt ${i}`;
      return `<button class="tab ${i === alternative ? "active" : ""}" data-alternative="${i}"
        title="leaf ${d.leaf}">${label} &middot; ${esc(formatNumber(d.objective))}</button>`;
    })
    .join("");
  const sel = result.diverse[alternative] ?? result.diverse[0];
  const achieved = sel
    ? tree.leaves.find((l) => l.id === sel.leaf)
    : tree.leaves.find((l) => l.id === result.leaf);
  const changed = (() => {
    const rows = rowsForAlternative(tree.schema, state.instance, result, alternative);
    return rows ? changedFeatures(rows).length : 0;
  })();

  return `
    <div class="result-head">
      <span class="badge found">found</span>${stale}
      <span>objective <b>${esc(formatNumber(result.objective ?? NaN))}</b></span>
      ${achieved ? `<span>&rarr; ${esc(achieved.class_name ?? String(achieved.label))}</span>` : ""}
      ${result.boundary_adjusted ? `<span class="badge nudge" title="moved off a decision boundary">nudged</span>` : ""}
      <span class="hint">${changed} feature(s) change</span>
    </div>
    <div class="tabs">${tabs}</div>
    ${diffTableHTML(state, result, alternative)}
    ${heatmapHTML(state, result, alternative)}
    <details><summary>per-leaf ledger (${result.ledger.length})</summary>${ledgerHTML(result.ledger)}</details>
  `;
}

// -- history and sweep ----------------------------------------------------------

export function historyHTML(history: HistoryEntry[]): string {
  if (!history.length) return `<p class="hint">apply a query to start the audit trail</p>`;
  const items = history
    .map((h) => {
      const obj = h.result.objective;
      const n = h.request.constraints?.freeze?.length ?? 0;
      return `<div class="hist-item ${h.result.status === "found" ? "" : "hist-miss"}">
        <span class="hist-seq">#${h.seq}</span>
        <span class="num">${obj === null ? "&mdash;" : esc(formatNumber(obj))}</span>
        <span class="hint">${n} frozen</span>
      </div>`;
    })
    .join("");
  return `<div class="hist-strip">${items}</div>`;
}

export function sweepHTML(state: ExplorerState): string {
  if (!state.sweep.length) return "";
  const geom = { width: 360, height: 140, pad: 18 };
  const pts = chartPoints(state.sweep, geom);
  if (!pts.length) return `<p class="hint">sweep found no feasible point</p>`;
  const line = polylinePath(pts);
  const dots = pts
    .map(
      (p) => `<circle cx="${p.x.toFixed(1)}" cy="${p.y.toFixed(1)}" r="3">
        <title>eps=${p.epsilon}: ${p.objective}</title></circle>`
    )
    .join("");
  const labels = pts
    .map(
      (p) =>
        `<text x="${p.x.toFixed(1)}" y="${geom.height - 4}" text-anchor="middle">${p.epsilon}</text>`
    )
    .join("");
  return `<svg viewBox="0 0 ${geom.width} ${geom.height}" class="sweep-chart" role="img"
      aria-label="objective vs epsilon">
    <polyline points="${line}" fill="none"></polyline>${dots}${labels}
  </svg>`;
}

export { diffRows };
