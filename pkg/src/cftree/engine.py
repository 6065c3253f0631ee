"""Exact counterfactual search over a decision tree.

The global problem min E(x; x_bar) s.t. the tree classifies x into the
target factorizes over the leaves of the target classes: each leaf's region
is a polytope, so the per-leaf problem is convex (or mixed-integer when
one-hot dummies are free), and the global optimum is the best per-leaf
optimum. This module owns that enumeration, the per-leaf dispatch, winner
selection, and the four query extensions (diverse set, class subsets,
per-class prices, margin schedules).

Routing detail that the polytope view misses: left branches route strictly
(f < 0), while region rows are compiled weakly (-f >= 0). An optimum sitting
exactly on a left-branch hyperplane therefore routes to the sibling leaf.
After every solve the result is re-routed through the tree; on a miss the
leaf is re-solved once with a tiny margin on its strict rows and marked
boundary_adjusted.

A solver failure inside one leaf is recorded in the per-leaf ledger and
never aborts the others; the ledger is part of the result document.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .constraints import (
    ConstraintSet,
    TargetSpec,
    UserConstraints,
    check_feasible_point,
    compile_constraints,
)
from .cost import CostFunction, assemble_program, eval_cost, eval_cost_many
from .errors import DimensionMismatch, InvalidEpsilon, OutOfRangeValue, SolverError
from .program import STATUS_INFEASIBLE, STATUS_OPTIMAL, SolveOutcome
from .qp import solve_qp
from .schema import decode
from .separable import fold_to_box, solve_separable
from .simplex import solve_lp
from .tree import AXIS_ALIGNED, TreeModel, leaf_region, predict, prune_redundant, target_leaves

STATUS_FOUND = "found"
STATUS_NO_LEAF = "no_feasible_leaf"

PARALLEL_LEAF_THRESHOLD = 4


@dataclass
class Query:
    tree: TreeModel
    x_bar: np.ndarray
    target: TargetSpec
    cost: CostFunction
    user: UserConstraints = field(default_factory=UserConstraints)
    epsilon: float | None = None        # None falls back to the constraint document's value
    parallel: bool | None = None        # None: auto when > PARALLEL_LEAF_THRESHOLD leaves
    max_workers: int | None = None
    prune_regions: bool = False

    def effective_epsilon(self) -> float:
        return float(self.user.epsilon if self.epsilon is None else self.epsilon)


@dataclass
class LeafLedgerEntry:
    leaf: int
    status: str            # optimal | infeasible | unbounded | dropped | routing_failed | error:<Name>
    objective: float | None
    millis: float

    def to_document(self) -> dict:
        return {"leaf": self.leaf, "status": self.status,
                "objective": self.objective, "millis": self.millis}


@dataclass
class DiverseEntry:
    leaf: int
    x: np.ndarray
    raw: dict
    objective: float
    boundary_adjusted: bool

    def to_document(self) -> dict:
        return {"leaf": self.leaf, "x_star": [float(v) for v in self.x],
                "raw": self.raw, "objective": self.objective,
                "boundary_adjusted": self.boundary_adjusted}


@dataclass
class CounterfactualResult:
    status: str
    x: np.ndarray | None = None
    raw: dict | None = None
    objective: float = float("nan")
    leaf: int | None = None
    boundary_adjusted: bool = False
    ledger: list = field(default_factory=list)
    diverse: list = field(default_factory=list)
    certificates: dict | None = None

    def to_document(self) -> dict:
        return {
            "status": self.status,
            "x_star": None if self.x is None else [float(v) for v in self.x],
            "raw": self.raw,
            "objective": None if math.isnan(self.objective) else self.objective,
            "leaf": self.leaf,
            "boundary_adjusted": self.boundary_adjusted,
            "diverse": [d.to_document() for d in self.diverse],
            "ledger": [e.to_document() for e in self.ledger],
            "certificates": self.certificates,
        }


@dataclass
class _LeafSolution:
    leaf: int
    label: int
    x: np.ndarray                    # trimmed to the encoded dimension
    objective: float                 # E(x; x_bar)
    cs: ConstraintSet
    outcome: SolveOutcome
    boundary_adjusted: bool = False

    def selection_key(self, target: TargetSpec) -> tuple:
        return (self.objective + target.leaf_price(self.label), self.leaf)


def _check_instance(tree: TreeModel, x_bar) -> np.ndarray:
    x = np.asarray(x_bar, dtype=float)
    d = tree.schema.encoded_dim
    if x.shape != (d,):
        raise DimensionMismatch(f"instance has {x.size} coordinates, schema wants {d}")
    if not np.all(np.isfinite(x)):
        raise OutOfRangeValue("instance contains non-finite values")
    return x


def _solve_with_cs(query: Query, cs: ConstraintSet, warm: np.ndarray | None) -> SolveOutcome:
    """Dispatch one compiled constraint set to the right solver."""
    tree, cost, x_bar = query.tree, query.cost, query.x_bar
    if tree.kind == AXIS_ALIGNED and cost.is_separable:
        lower, upper = fold_to_box(cs)
        return solve_separable(x_bar, lower, upper, cost, cs.one_hot_blocks)
    prog = assemble_program(cost, x_bar, cs, warm_start=warm)
    if cs.integrality:
        from .mixed import solve_mixed
        return solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    if prog.quadratic is not None:
        return solve_qp(prog)
    return solve_lp(prog)


def _solve_leaf(query: Query, leaf: int, epsilon: float,
                warm: np.ndarray | None) -> tuple[LeafLedgerEntry, _LeafSolution | None]:
    tree = query.tree
    t0 = time.perf_counter()
    try:
        region = leaf_region(tree, leaf)
        if query.prune_regions:
            region = prune_redundant(region)
        cs = compile_constraints(tree.schema, query.x_bar, query.user, region, epsilon)
        out = _solve_with_cs(query, cs, warm)
    except SolverError as exc:
        millis = (time.perf_counter() - t0) * 1000.0
        return LeafLedgerEntry(leaf, f"error:{type(exc).__name__}", None, millis), None
    millis = (time.perf_counter() - t0) * 1000.0
    if out.status != STATUS_OPTIMAL:
        return LeafLedgerEntry(leaf, out.status, None, millis), None
    d = tree.schema.encoded_dim
    x = np.asarray(out.x, dtype=float)[:d]
    objective = eval_cost(query.cost, x, query.x_bar)
    entry = LeafLedgerEntry(leaf, STATUS_OPTIMAL, objective, millis)
    sol = _LeafSolution(leaf=leaf, label=tree.leaf_label(leaf), x=x,
                        objective=objective, cs=cs, outcome=out)
    return entry, sol


def _boundary_margin(x_bar: np.ndarray) -> float:
    return 1e-9 * max(1.0, float(np.max(np.abs(x_bar), initial=0.0)))


def _nudge_onto_region(query: Query, sol: _LeafSolution, classes: list[int],
                       margin: float) -> _LeafSolution | None:
    """Least-norm correction pushing x clear of the tight region rows.

    A routing miss happens when an optimum sits on a region facet to the last
    ulp. Moving O(margin) along the tight rows' normals restores routing at a
    cost change below every reported tolerance, so a full re-solve is usually
    unnecessary. Returns None when the correction would disturb anything else.
    """
    cs = sol.cs
    nr = cs.n_region_rows
    if nr == 0 or cs.integrality:
        return None
    x = sol.x
    a = cs.a_in[:nr]
    b = cs.b_in[:nr]
    slack = a @ x - b
    tight = slack < margin
    if not np.any(tight):
        return None
    sys_a = np.vstack([a[tight], cs.a_eq]) if cs.a_eq.shape[0] else a[tight]
    sys_b = np.concatenate([margin - slack[tight], np.zeros(cs.a_eq.shape[0])])
    delta, *_ = np.linalg.lstsq(sys_a, sys_b, rcond=None)
    if not np.all(np.isfinite(delta)):
        return None
    if np.max(np.abs(sys_a @ delta - sys_b)) > 0.5 * margin:
        return None
    x2 = x + delta
    # the correction must clear every region row outright and must not push
    # any other constraint beyond a sliver of the margin
    if np.min(a @ x2 - b) <= 0.0:
        return None
    drift = 0.01 * margin
    if cs.a_eq.shape[0] and np.max(np.abs(cs.a_eq @ x2 - cs.b_eq)) > drift:
        return None
    rest_a, rest_b = cs.a_in[nr:], cs.b_in[nr:]
    if rest_a.shape[0] and np.min(rest_a @ x2 - rest_b) < -drift:
        return None
    if predict(query.tree, x2) not in classes:
        return None
    return _LeafSolution(leaf=sol.leaf, label=sol.label, x=x2,
                         objective=eval_cost(query.cost, x2, query.x_bar),
                         cs=cs, outcome=sol.outcome, boundary_adjusted=True)


def _verify_or_fix(query: Query, sol: _LeafSolution, classes: list[int]) -> _LeafSolution | None:
    """Route the solution through the tree; nudge off strict rows on a miss."""
    tree = query.tree
    if predict(tree, sol.x) in classes:
        return sol
    margin = _boundary_margin(query.x_bar)
    nudged = _nudge_onto_region(query, sol, classes, margin)
    if nudged is not None:
        return nudged
    cs2 = sol.cs.with_strict_margin(margin, include_weak=True)
    try:
        # cold solve: the failed point is infeasible for the shifted rows by
        # exactly the margin, which is inside the warm-start tolerance
        out = _solve_with_cs(query, cs2, None)
    except SolverError:
        return None
    if out.status != STATUS_OPTIMAL:
        return None
    d = tree.schema.encoded_dim
    x = np.asarray(out.x, dtype=float)[:d]
    if predict(tree, x) not in classes:
        return None
    return _LeafSolution(leaf=sol.leaf, label=sol.label, x=x,
                         objective=eval_cost(query.cost, x, query.x_bar),
                         cs=cs2, outcome=out, boundary_adjusted=True)


def _certificates(outcome: SolveOutcome) -> dict | None:
    if outcome is None or math.isnan(outcome.kkt_residual):
        return None
    return {
        "kkt_residual": float(outcome.kkt_residual),
        "active_rows": [int(i) for i in outcome.active_rows],
        "iterations": int(outcome.iterations),
    }


def _gather(query: Query, leaves: list[int], epsilon: float,
            warm_by_leaf: dict | None = None) -> tuple[list[LeafLedgerEntry], list[_LeafSolution]]:
    """Solve every leaf, optionally in parallel; results in leaf order."""
    warm_by_leaf = warm_by_leaf or {}

    def job(leaf: int):
        return _solve_leaf(query, leaf, epsilon, warm_by_leaf.get(leaf, query.x_bar))

    use_parallel = query.parallel if query.parallel is not None \
        else len(leaves) > PARALLEL_LEAF_THRESHOLD
    cap = query.max_workers if query.max_workers else 8
    if cap <= 1:
        use_parallel = False
    if use_parallel and len(leaves) > 1:
        with ThreadPoolExecutor(max_workers=min(cap, len(leaves))) as pool:
            results = list(pool.map(job, leaves))
    else:
        results = [job(leaf) for leaf in leaves]
    ledger = [entry for entry, _ in results]
    solutions = [sol for _, sol in results if sol is not None]
    return ledger, solutions


def _acceptable_labels(target: TargetSpec, leaf_label: int, classes: list[int]) -> list[int]:
    """Classes a leaf's solution may route to and still honor its price.

    With per-class prices, a boundary optimum drifting into a pricier class
    would be charged more than the selection assumed; routing into a class
    priced at or below the leaf's own label keeps the reported total an
    exact upper bound. Other modes accept any target class.
    """
    if target.mode != "class_cost":
        return classes
    cap = target.leaf_price(leaf_label)
    return [y for y in classes if target.leaf_price(y) <= cap]


def _assemble(query: Query, classes: list[int], ledger: list[LeafLedgerEntry],
              solutions: list[_LeafSolution]) -> CounterfactualResult:
    """Verify candidates cheapest-first and build the result document."""
    schema = query.tree.schema
    by_leaf = {e.leaf: e for e in ledger}
    verified: list[_LeafSolution] = []
    for sol in sorted(solutions, key=lambda s: s.selection_key(query.target)):
        fixed = _verify_or_fix(query, sol, _acceptable_labels(query.target, sol.label, classes))
        if fixed is None:
            by_leaf[sol.leaf].status = "routing_failed"
            by_leaf[sol.leaf].objective = None
            continue
        if fixed.boundary_adjusted:
            by_leaf[sol.leaf].objective = fixed.objective
        verified.append(fixed)
    if not verified:
        return CounterfactualResult(status=STATUS_NO_LEAF, ledger=ledger)
    verified.sort(key=lambda s: s.selection_key(query.target))
    winner = verified[0]
    diverse = [DiverseEntry(leaf=s.leaf, x=s.x, raw=decode(schema, s.x),
                            objective=s.objective,
                            boundary_adjusted=s.boundary_adjusted)
               for s in verified]
    return CounterfactualResult(
        status=STATUS_FOUND,
        x=winner.x,
        raw=decode(schema, winner.x),
        objective=winner.objective,
        leaf=winner.leaf,
        boundary_adjusted=winner.boundary_adjusted,
        ledger=ledger,
        diverse=diverse,
        certificates=_certificates(winner.outcome),
    )


def explain(query: Query) -> CounterfactualResult:
    """Exact counterfactual: best feasible per-leaf optimum over the target.

    In class_cost mode the selection key is E(x*; x_bar) + L(leaf label) and
    every class's leaves are enumerated; the reported objective stays the
    pure cost E. Ties in the selection key go to the lowest leaf id.
    """
    query.x_bar = _check_instance(query.tree, query.x_bar)
    if query.user.candidate_set is not None:
        return dataset_search(query)
    source = predict(query.tree, query.x_bar)
    classes = query.target.target_classes(query.tree.schema.class_count, source)
    leaves = target_leaves(query.tree, set(classes))
    epsilon = query.effective_epsilon()
    ledger, solutions = _gather(query, leaves, epsilon)
    return _assemble(query, classes, ledger, solutions)


def explain_diverse(query: Query, k: int) -> list[CounterfactualResult]:
    """Top-k feasible per-leaf optima, each wrapped as a full result.

    Entry 0 is exactly explain's winner; entries are sorted by the selection
    key ascending.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    base = explain(query)
    if base.status != STATUS_FOUND:
        return []
    results = []
    for entry in base.diverse[:k]:
        results.append(CounterfactualResult(
            status=STATUS_FOUND,
            x=entry.x,
            raw=entry.raw,
            objective=entry.objective,
            leaf=entry.leaf,
            boundary_adjusted=entry.boundary_adjusted,
            ledger=base.ledger,
            diverse=base.diverse,
            certificates=base.certificates if entry.leaf == base.leaf else None,
        ))
    return results


def explain_margin(query: Query, schedule) -> list[tuple[float, CounterfactualResult]]:
    """Re-solve along an increasing margin schedule with per-leaf warm starts.

    The schedule must start at 0 and increase strictly. A leaf that turns
    infeasible at some margin is dropped for all larger margins (its region
    only shrinks). The epsilon-0 entry coincides with plain explain.
    """
    schedule = [float(e) for e in schedule]
    if not schedule or schedule[0] != 0.0:
        raise InvalidEpsilon("schedule must start at 0")
    for a, b in zip(schedule, schedule[1:]):
        if b <= a:
            raise InvalidEpsilon("schedule must increase strictly")

    query.x_bar = _check_instance(query.tree, query.x_bar)
    source = predict(query.tree, query.x_bar)
    classes = query.target.target_classes(query.tree.schema.class_count, source)
    leaves = target_leaves(query.tree, set(classes))

    out: list[tuple[float, CounterfactualResult]] = []
    warm: dict[int, np.ndarray] = {}
    dropped: set[int] = set()
    for eps in schedule:
        live = [leaf for leaf in leaves if leaf not in dropped]
        ledger, solutions = _gather(query, live, eps, warm_by_leaf=warm)
        for leaf in leaves:
            if leaf in dropped:
                ledger.append(LeafLedgerEntry(leaf, "dropped", None, 0.0))
        ledger.sort(key=lambda e: e.leaf)
        solved = {s.leaf for s in solutions}
        for leaf in live:
            if leaf not in solved:
                dropped.add(leaf)
        for s in solutions:
            warm[s.leaf] = s.x
        out.append((eps, _assemble(query, classes, ledger, solutions)))
    return out


def dataset_search(query: Query, data=None) -> CounterfactualResult:
    """Baseline: cheapest target-class instance from a finite pool.

    Pool labels come from tree prediction or the stored ground truth
    depending on the query's label_source. Candidates must satisfy the user
    constraints (freezes, bounds, caps, monotone) but not the leaf geometry;
    membership in the target is by label. Empty pool after filtering means
    no_feasible_leaf.
    """
    from .fixtures import SyntheticDataset, load_dataset

    query.x_bar = _check_instance(query.tree, query.x_bar)
    if data is None:
        cand = query.user.candidate_set
        if isinstance(cand, SyntheticDataset):
            data = cand
        elif isinstance(cand, str):
            data = load_dataset(cand)
        else:
            raise ValueError("dataset_search needs a candidate pool")

    tree = query.tree
    source = predict(tree, query.x_bar)
    classes = set(query.target.target_classes(tree.schema.class_count, source))
    xs = data.x
    if xs.shape[0] == 0:
        return CounterfactualResult(status=STATUS_NO_LEAF)
    if query.user.label_source == "ground_truth":
        labels = np.asarray(data.labels, dtype=int)
    else:
        labels = np.array([predict(tree, xs[i]) for i in range(xs.shape[0])])

    user_cs = compile_constraints(tree.schema, query.x_bar, query.user, None, 0.0)
    keep = []
    for i in range(xs.shape[0]):
        if int(labels[i]) in classes and check_feasible_point(user_cs, xs[i], 1e-9):
            keep.append(i)
    if not keep:
        return CounterfactualResult(status=STATUS_NO_LEAF)
    keep = np.asarray(keep)
    costs = eval_cost_many(query.cost, xs[keep], query.x_bar)
    prices = np.array([query.target.leaf_price(int(labels[i])) for i in keep])
    best = int(np.argmin(costs + prices))
    idx = int(keep[best])
    x = xs[idx].copy()
    return CounterfactualResult(
        status=STATUS_FOUND,
        x=x,
        raw=decode(tree.schema, x),
        objective=float(costs[best]),
        leaf=tree.route(x),
        boundary_adjusted=False,
    )
