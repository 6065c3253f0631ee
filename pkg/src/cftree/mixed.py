"""Exact one-hot mixed-integer minimization by branch-and-bound.

Integrality only ever enters through one-hot dummy coordinates, so the
search branches on whole blocks: fixing a category coordinate to 1 pins its
siblings to 0 through the block equalities, which collapses the block in one
move; fixing it to 0 removes a single category. Nodes are explored
best-first by relaxation bound (depth-first among equal bounds, fix-to-1
pushed before fix-to-0), and a node is pruned when its bound cannot beat the
incumbent by more than 1e-9.

An integral relaxation is polished by re-solving with every block pinned to
its rounded assignment, so the returned coordinates are exactly 0/1 and the
attached KKT certificate belongs to that pinned subproblem.

relax_and_round exists to demonstrate why rounding a single relaxation is
not a substitute for the exact search; nothing on the exact path calls it.
"""

from __future__ import annotations

import heapq
import itertools

import numpy as np

from .errors import NodeBudgetExceeded, SolverError
from .program import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    ProgramInstance,
    SolveOutcome,
)
from .qp import solve_qp
from .simplex import solve_lp

DEFAULT_NODE_BUDGET = 1_000_000
_PRUNE_TOL = 1e-9
_INT_TOL = 1e-6


def _solve_relaxation(prog: ProgramInstance, fixes: dict, warm=None) -> SolveOutcome:
    """Continuous solve with the fixed coordinates pinned by equality rows."""
    if fixes:
        rows = np.zeros((len(fixes), prog.n))
        rhs = np.zeros(len(fixes))
        for i, (coord, val) in enumerate(sorted(fixes.items())):
            rows[i, coord] = 1.0
            rhs[i] = val
        a_eq = np.vstack([prog.a_eq, rows]) if prog.a_eq.shape[0] else rows
        b_eq = np.concatenate([prog.b_eq, rhs])
    else:
        a_eq, b_eq = prog.a_eq, prog.b_eq
    sub = ProgramInstance(
        n=prog.n, quadratic=prog.quadratic, linear=prog.linear,
        a_eq=a_eq, b_eq=b_eq, a_in=prog.a_in, b_in=prog.b_in,
        constant=prog.constant, warm_start=warm,
    )
    if sub.quadratic is None:
        return solve_lp(sub)
    return solve_qp(sub)


def _block_of(coord: int, blocks) -> tuple[int, int]:
    for start, stop in blocks:
        if start <= coord < stop:
            return start, stop
    raise ValueError(f"integrality coordinate {coord} is not inside any one-hot block")


def _pin_blocks(x: np.ndarray, integrality, blocks) -> dict:
    """Fixes that pin every block to the rounded assignment of x."""
    fixes: dict[int, float] = {}
    for start, stop in blocks:
        vals = x[start:stop]
        winner = int(np.argmax(vals))
        for i, c in enumerate(range(start, stop)):
            fixes[c] = 1.0 if i == winner else 0.0
    for c in integrality:
        if c not in fixes:
            _block_of(c, blocks)     # raises; integrality outside blocks is misuse
    return fixes


def solve_mixed(prog: ProgramInstance, integrality, one_hot_blocks,
                node_budget: int = DEFAULT_NODE_BUDGET,
                _trace: list | None = None) -> SolveOutcome:
    """Global minimum with the given coordinates restricted to {0, 1}.

    Returns an optimal SolveOutcome whose integrality coordinates are exactly
    integral, or an infeasible one. Raises NodeBudgetExceeded (carrying the
    incumbent and the bound gap) when the node budget runs out first.
    `_trace`, when given, collects (depth, parent_bound, relaxation_objective)
    for every explored node.
    """
    integrality = tuple(sorted(int(c) for c in integrality))
    blocks = tuple(one_hot_blocks)
    if not integrality:
        out = _solve_relaxation(prog, {})
        return out

    incumbent: SolveOutcome | None = None
    counter = itertools.count()
    # heap entries: (bound, -depth, tiebreak, fixes, warm)
    heap = [(-np.inf, 0, next(counter), {}, prog.warm_start)]
    nodes = 0
    best_open_bound = -np.inf

    while heap:
        bound, neg_depth, _, fixes, warm = heapq.heappop(heap)
        best_open_bound = bound
        if incumbent is not None and bound >= incumbent.objective - _PRUNE_TOL:
            break    # best-first order: every remaining node is at least as bad
        nodes += 1
        if nodes > node_budget:
            gap = None
            if incumbent is not None:
                gap = float(incumbent.objective - bound)
            raise NodeBudgetExceeded(
                f"node budget {node_budget} exceeded", incumbent=incumbent, bound_gap=gap)

        try:
            relax = _solve_relaxation(prog, fixes, warm)
        except SolverError:
            continue     # treat a numerically failed node as pruned
        if _trace is not None:
            obj = relax.objective if relax.status == STATUS_OPTIMAL else np.inf
            _trace.append((-neg_depth, bound, obj))
        if relax.status != STATUS_OPTIMAL:
            continue
        if incumbent is not None and relax.objective >= incumbent.objective - _PRUNE_TOL:
            continue

        frac = np.array([min(abs(relax.x[c]), abs(relax.x[c] - 1.0)) for c in integrality])
        if np.max(frac, initial=0.0) <= _INT_TOL:
            candidate = _polish(prog, relax.x, integrality, blocks)
            if candidate is not None and (incumbent is None
                                          or candidate.objective < incumbent.objective):
                incumbent = candidate
            continue

        # branch on the most fractional coordinate's block
        pick = integrality[int(np.argmax(frac))]
        start, stop = _block_of(pick, blocks)
        depth = -neg_depth + 1
        one_fix = dict(fixes)
        for c in range(start, stop):
            one_fix[c] = 1.0 if c == pick else 0.0
        zero_fix = dict(fixes)
        zero_fix[pick] = 0.0
        heapq.heappush(heap, (relax.objective, -depth, next(counter), one_fix, relax.x))
        heapq.heappush(heap, (relax.objective, -depth, next(counter), zero_fix, relax.x))

    if incumbent is None:
        return SolveOutcome(status=STATUS_INFEASIBLE, iterations=nodes)
    incumbent.iterations = nodes
    return incumbent


def _polish(prog: ProgramInstance, x_relax: np.ndarray, integrality, blocks) -> SolveOutcome | None:
    """Re-solve with every block pinned to the rounded assignment of x_relax."""
    fixes = _pin_blocks(x_relax, integrality, blocks)
    try:
        out = _solve_relaxation(prog, fixes, x_relax)
    except SolverError:
        return None
    if out.status != STATUS_OPTIMAL:
        return None
    x = out.x.copy()
    for c in integrality:
        x[c] = float(round(x[c]))
    out.x = x
    out.objective = prog.objective(x)
    return out


def relax_and_round(prog: ProgramInstance, integrality, one_hot_blocks) -> dict:
    """Solve the relaxation once and round each block to its largest coordinate.

    Demonstration harness for the two failure modes of rounding: the rounded
    point can leave the feasible set, and when it stays feasible it can be
    arbitrarily far from the true mixed-integer optimum. Feasibility of tree
    routing is the caller's to check; this reports row feasibility only.
    """
    integrality = tuple(sorted(int(c) for c in integrality))
    blocks = tuple(one_hot_blocks)
    try:
        relax = _solve_relaxation(prog, {})
    except SolverError:
        return {"x": None, "feasible": False, "objective": float("nan"),
                "relaxation_status": "error"}
    if relax.status != STATUS_OPTIMAL:
        return {"x": None, "feasible": False, "objective": float("nan"),
                "relaxation_status": relax.status}
    x = relax.x.copy()
    for start, stop in blocks:
        winner = int(np.argmax(x[start:stop]))
        x[start:stop] = 0.0
        x[start + winner] = 1.0
    feasible = True
    if prog.a_eq.shape[0] and np.max(np.abs(prog.a_eq @ x - prog.b_eq)) > 1e-9:
        feasible = False
    if feasible and prog.a_in.shape[0] and np.min(prog.a_in @ x - prog.b_in) < -1e-9:
        feasible = False
    return {
        "x": x,
        "feasible": feasible,
        "objective": prog.objective(x),
        "relaxation_status": relax.status,
        "relaxation_objective": relax.objective,
    }
