"""Closed-form per-coordinate solver for axis-aligned leaves.

When every constraint touches a single coordinate (axis-aligned region rows,
bounds, caps, monotone rows, freezes) and the cost decomposes per coordinate,
the per-leaf problem splits into independent scalar problems. Each continuous
coordinate is solved by the three-way median: the cost is convex with its
minimum at x_bar_d, so the box-constrained minimizer is x_bar_d clamped to
[l_d, u_d]. Each one-hot block is solved by trying every admissible category
and keeping the cheapest (ties go to the lowest category index).

fold_to_box turns a compiled ConstraintSet into per-coordinate intervals and
refuses anything with a cross-coordinate row; that refusal is an internal
dispatch assertion, not a user-facing condition.

Optimal outcomes carry the same certificate payload as the iterative solvers:
duals and a KKT residual for the box program that box_program materializes,
so the independent checker can audit this path too. The duals are known in
closed form per coordinate, which keeps the solve linear-time.
"""

from __future__ import annotations

import math

import numpy as np

from .constraints import ConstraintSet
from .cost import CostFunction, assemble_program, eval_cost
from .errors import EmptyInterval, NoAdmissibleCategory, NonSeparableCostOnSeparablePath
from .program import STATUS_INFEASIBLE, STATUS_OPTIMAL, SolveOutcome


def median_clip(x_bar_d: float, l_d: float, u_d: float) -> float:
    """Minimizer of a convex per-coordinate cost centered at x_bar_d on [l, u].

    This is the median of the three values. Raises EmptyInterval when
    l_d > u_d.
    """
    if l_d > u_d:
        raise EmptyInterval(f"interval [{l_d}, {u_d}] is empty")
    if x_bar_d < l_d:
        return l_d
    if x_bar_d > u_d:
        return u_d
    return float(x_bar_d)


def fold_to_box(cs: ConstraintSet) -> tuple[np.ndarray, np.ndarray]:
    """Collapse a compiled ConstraintSet into per-coordinate intervals.

    One-hot sum rows are skipped (block enumeration owns that structure);
    every other row must touch exactly one coordinate. A zero inequality row
    with positive rhs is unsatisfiable and folds to an empty interval.
    """
    lower = np.full(cs.n, -math.inf)
    upper = np.full(cs.n, math.inf)

    block_sum_rows = set()
    for r in range(cs.a_eq.shape[0]):
        row = cs.a_eq[r]
        nz = np.nonzero(row)[0]
        for start, stop in cs.one_hot_blocks:
            if (nz.size == stop - start and nz[0] == start and nz[-1] == stop - 1
                    and np.all(row[start:stop] == 1.0) and abs(cs.b_eq[r] - 1.0) < 1e-12):
                block_sum_rows.add(r)
                break

    for r in range(cs.a_eq.shape[0]):
        if r in block_sum_rows:
            continue
        row = cs.a_eq[r]
        nz = np.nonzero(row)[0]
        if nz.size != 1:
            raise NonSeparableCostOnSeparablePath(
                "cross-coordinate equality row on the separable path")
        c = int(nz[0])
        val = cs.b_eq[r] / row[c]
        lower[c] = max(lower[c], val)
        upper[c] = min(upper[c], val)

    for r in range(cs.a_in.shape[0]):
        row = cs.a_in[r]
        nz = np.nonzero(row)[0]
        if nz.size == 0:
            if cs.b_in[r] > 1e-9:
                lower[0] = math.inf
                upper[0] = -math.inf
            continue
        if nz.size != 1:
            raise NonSeparableCostOnSeparablePath(
                "cross-coordinate inequality row on the separable path")
        c = int(nz[0])
        w = row[c]
        if w > 0:
            lower[c] = max(lower[c], cs.b_in[r] / w)
        else:
            upper[c] = min(upper[c], cs.b_in[r] / w)
    return lower, upper


def _coord_cost(cost: CostFunction, d: int, v: float, center: float) -> float:
    delta = v - center
    total = 0.0
    if cost.lam1 is not None:
        total += cost.lam1[d] * abs(delta)
    if cost.quad_diag is not None:
        total += cost.quad_diag[d] * delta * delta
    return total


def _best_category(cost: CostFunction, x_bar: np.ndarray, lower: np.ndarray,
                   upper: np.ndarray, start: int, stop: int,
                   tol: float = 1e-9) -> int:
    """Index (within the block) of the cheapest admissible category."""
    best = -1
    best_cost = math.inf
    for ci, coord in enumerate(range(start, stop)):
        admissible = True
        for c2 in range(start, stop):
            val = 1.0 if c2 == coord else 0.0
            if val < lower[c2] - tol or val > upper[c2] + tol:
                admissible = False
                break
        if not admissible:
            continue
        total = sum(_coord_cost(cost, c2, 1.0 if c2 == coord else 0.0, x_bar[c2])
                    for c2 in range(start, stop))
        if total < best_cost - 1e-15:
            best = ci
            best_cost = total
    if best < 0:
        raise NoAdmissibleCategory(f"block [{start}, {stop}) has no admissible category")
    return best


def _box_certificate(cost: CostFunction, x: np.ndarray, x_bar: np.ndarray,
                     lower: np.ndarray, upper: np.ndarray, pinned: np.ndarray,
                     objective: float) -> tuple[np.ndarray, np.ndarray, list[int], float]:
    """Closed-form KKT data for a solved box problem.

    The duals index the row-normalized form of the program that box_program
    builds: per coordinate (ascending, pinned ones skipped) a finite lower
    row then a finite upper row, the |x_d - x_bar_d| auxiliary row pairs
    below, and one equality row per pinned coordinate. Auxiliary rows have
    norm sqrt(2), so their duals carry that factor. Returns
    (ineq_duals, eq_duals, active_rows, kkt_residual); the residual is
    evaluated, not assumed zero, over the same normalized quantities the
    independent checker uses.
    """
    n = x.size
    lam1 = cost.lam1 if cost.lam1 is not None else np.zeros(n)
    qd = cost.quad_diag if cost.quad_diag is not None else np.zeros(n)
    delta = x - x_bar
    pos = delta > 0.0
    neg = delta < 0.0
    # one-sided distance rows: t_d >= delta_d binds when delta_d >= 0, its
    # mirror when delta_d <= 0; at delta_d == 0 both bind and the l1 weight
    # splits evenly, which is the only split making the t-row stationary
    mu_plus = np.where(pos, lam1, np.where(neg, 0.0, 0.5 * lam1))
    mu_minus = np.where(neg, lam1, np.where(pos, 0.0, 0.5 * lam1))
    grad = 2.0 * qd * delta
    force = grad + mu_plus - mu_minus

    finite_lo = ~pinned & np.isfinite(lower)
    finite_up = ~pinned & np.isfinite(upper)
    offs = np.zeros(n + 1, dtype=int)
    np.cumsum(finite_lo.astype(int) + finite_up.astype(int), out=offs[1:])
    n_box = int(offs[-1])
    lo_rows = offs[:-1][finite_lo]
    up_rows = (offs[:-1] + finite_lo)[finite_up]

    aux = np.nonzero(lam1 > 0)[0]
    m = aux.size
    plus_rows = n_box + 2 * np.arange(m)
    minus_rows = plus_rows + 1
    rt2 = math.sqrt(2.0)
    mu = np.zeros(n_box + 2 * m)
    # a coordinate off its bounds has zero net force, so these only load
    # rows the solution actually sits on
    mu[lo_rows] = np.maximum(force[finite_lo], 0.0)
    mu[up_rows] = np.maximum(-force[finite_up], 0.0)
    mu[plus_rows] = rt2 * mu_plus[aux]
    mu[minus_rows] = rt2 * mu_minus[aux]
    nu = force[pinned]

    inv = 1.0 / rt2
    contrib = np.zeros(n)
    contrib[finite_lo] += mu[lo_rows]
    contrib[finite_up] -= mu[up_rows]
    contrib[aux] += inv * mu[minus_rows] - inv * mu[plus_rows]
    contrib[pinned] += nu
    r_x = grad - contrib
    r_t = lam1[aux] - inv * (mu[plus_rows] + mu[minus_rows])
    gmax = float(np.max(np.abs(grad), initial=0.0))
    if m:
        gmax = max(gmax, float(np.max(lam1[aux])))
    stationarity = max(float(np.max(np.abs(r_x), initial=0.0)),
                       float(np.max(np.abs(r_t), initial=0.0))) / (1.0 + gmax)

    t = np.abs(delta[aux])
    lo_slack = (x - lower)[finite_lo]
    up_slack = (upper - x)[finite_up]
    plus_slack = inv * (t - delta[aux])
    minus_slack = inv * (t + delta[aux])
    primal_in = max(float(np.max(-lo_slack, initial=0.0)),
                    float(np.max(-up_slack, initial=0.0)),
                    float(np.max(-plus_slack, initial=0.0)),
                    float(np.max(-minus_slack, initial=0.0)))
    primal_in = max(0.0, primal_in)
    pin_vals = np.where(lower == upper, lower, x)[pinned]
    primal_eq = float(np.max(np.abs(x[pinned] - pin_vals), initial=0.0))
    dual_neg = max(0.0, -float(np.min(mu, initial=0.0)))
    comp = max(float(np.max(np.abs(mu[lo_rows] * lo_slack), initial=0.0)),
               float(np.max(np.abs(mu[up_rows] * up_slack), initial=0.0)),
               float(np.max(np.abs(mu[plus_rows] * plus_slack), initial=0.0)),
               float(np.max(np.abs(mu[minus_rows] * minus_slack), initial=0.0)))
    comp /= 1.0 + abs(objective)

    active = np.concatenate([
        lo_rows[(x == lower)[finite_lo]],
        up_rows[(x == upper)[finite_up]],
        plus_rows[delta[aux] >= 0.0],
        minus_rows[delta[aux] <= 0.0],
    ])
    residual = max(stationarity, primal_in, primal_eq, dual_neg, comp)
    return mu, nu, sorted(int(i) for i in active), residual


def box_program(cost: CostFunction, x_bar: np.ndarray, lower: np.ndarray,
                upper: np.ndarray, blocks: tuple[tuple[int, int], ...] = (),
                x: np.ndarray | None = None):
    """Materialize the folded box problem as a dense ProgramInstance.

    Row order matches the duals a separable SolveOutcome carries: per
    coordinate (ascending, pinned coordinates skipped) a finite lower row
    then a finite upper row, with the auxiliary distance rows appended below
    by the cost lowering. Pinned coordinates (l_d == u_d, and one-hot block
    coordinates at their assigned vertex, read from x) become equality rows
    in ascending coordinate order. Running check_kkt on this program audits
    the solver's closed-form certificate independently.
    """
    x_bar = np.asarray(x_bar, dtype=float)
    n = x_bar.size
    in_block = np.zeros(n, dtype=bool)
    for start, stop in blocks:
        in_block[start:stop] = True
    pinned = (lower == upper) | in_block
    if x is None:
        if np.any(in_block & (lower != upper)):
            raise ValueError("one-hot pins come from the solved point; pass x")
        x = np.where(pinned, lower, 0.0)
    x = np.asarray(x, dtype=float)[:n]
    pin_vals = np.where(lower == upper, lower, x)

    a_in, b_in, a_eq, b_eq = [], [], [], []
    for d in range(n):
        if pinned[d]:
            row = np.zeros(n)
            row[d] = 1.0
            a_eq.append(row)
            b_eq.append(pin_vals[d])
            continue
        if np.isfinite(lower[d]):
            row = np.zeros(n)
            row[d] = 1.0
            a_in.append(row)
            b_in.append(lower[d])
        if np.isfinite(upper[d]):
            row = np.zeros(n)
            row[d] = -1.0
            a_in.append(row)
            b_in.append(-upper[d])
    cs = ConstraintSet(
        n=n,
        a_eq=np.asarray(a_eq, dtype=float).reshape(len(a_eq), n),
        b_eq=np.asarray(b_eq, dtype=float),
        a_in=np.asarray(a_in, dtype=float).reshape(len(a_in), n),
        b_in=np.asarray(b_in, dtype=float),
    )
    return assemble_program(cost, x_bar, cs)


def solve_separable(x_bar: np.ndarray, lower: np.ndarray, upper: np.ndarray,
                    cost: CostFunction,
                    blocks: tuple[tuple[int, int], ...] = ()) -> SolveOutcome:
    """Solve the separable per-leaf problem in closed form.

    Continuous coordinates take median_clip(x_bar_d, l_d, u_d); pinned
    coordinates arrive as l_d == u_d and fall out of the same formula. Each
    block in `blocks` is assigned its cheapest admissible category. Status is
    infeasible when an interval is empty or a block has no admissible
    category; nothing else can fail.

    The returned x is lifted to (x, t) over the auxiliary distance
    coordinates, matching the iterative solvers, and the outcome carries
    duals plus a measured KKT residual for the program box_program builds.
    """
    if not cost.is_separable:
        raise NonSeparableCostOnSeparablePath("cost has a cross-coordinate quadratic")
    x_bar = np.asarray(x_bar, dtype=float)
    n = x_bar.size
    in_block = np.zeros(n, dtype=bool)
    for start, stop in blocks:
        in_block[start:stop] = True

    # vector form of median_clip over every non-block coordinate
    if np.any((lower > upper) & ~in_block):
        return SolveOutcome(status=STATUS_INFEASIBLE)
    x = np.clip(x_bar, lower, upper)
    try:
        for start, stop in blocks:
            ci = _best_category(cost, x_bar, lower, upper, start, stop)
            x[start:stop] = 0.0
            x[start + ci] = 1.0
    except NoAdmissibleCategory:
        return SolveOutcome(status=STATUS_INFEASIBLE)

    objective = eval_cost(cost, x, x_bar)
    pinned = (lower == upper) | in_block
    mu, nu, active, residual = _box_certificate(
        cost, x, x_bar, lower, upper, pinned, objective)
    lam1 = cost.lam1 if cost.lam1 is not None else np.zeros(n)
    lifted = np.concatenate([x, np.abs((x - x_bar)[lam1 > 0])])
    return SolveOutcome(
        status=STATUS_OPTIMAL,
        x=lifted,
        objective=objective,
        active_rows=active,
        ineq_duals=mu,
        eq_duals=nu,
        kkt_residual=residual,
        iterations=1,
    )
