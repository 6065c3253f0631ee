"""Independent brute-force minimizers used to verify the exact solvers.

Three modes, none sharing code with the solver paths they check:

  grid             dense lattice scan over a bounding box with two
                   refinement passes around the best few well-separated
                   lattice points; the box comes from single-coordinate rows
                   plus a sublevel-set radius derived from an objective cap
  kkt_enumeration  try every subset of inequality rows as the active set,
                   solve the resulting stationarity system, keep feasible
                   candidates (vertex enumeration when the objective is
                   linear)
  sampling         best of 1e5 feasible rejection samples; an upper bound
                   only

All three respect integrality coordinates ({0,1} values, one category per
block) so mixed problems can be checked too. enumerate_mixed_minimum is the
exhaustive assignment oracle for branch-and-bound: it tries every category
combination and solves each continuous subproblem.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .constraints import ConstraintSet
from .cost import CostFunction, assemble_program, eval_cost_many
from .errors import OracleTooLarge
from .program import STATUS_OPTIMAL, ProgramInstance

_FEAS = 1e-9
_DEFAULT_POINTS = 21
_MAX_COMBOS = 1 << 20
_SAMPLES = 100_000
_GRID_SEEDS = 4


@dataclass
class OracleReport:
    mode: str
    objective: float                  # +inf when nothing feasible was found
    x: np.ndarray | None
    resolution: float = float("nan")  # grid only: objective-scale uncertainty
                                      # of the reported minimum (see _grid)
    n_feasible: int = 0


def oracle_minimum(cs: ConstraintSet, cost: CostFunction, x_bar: np.ndarray,
                   mode: str, seed: int = 0, objective_cap: float | None = None,
                   grid_points: int = _DEFAULT_POINTS, refinements: int = 2) -> float:
    """Objective bound by the requested mode. See oracle_report for detail."""
    return oracle_report(cs, cost, x_bar, mode, seed=seed, objective_cap=objective_cap,
                         grid_points=grid_points, refinements=refinements).objective


def oracle_report(cs: ConstraintSet, cost: CostFunction, x_bar: np.ndarray,
                  mode: str, seed: int = 0, objective_cap: float | None = None,
                  grid_points: int = _DEFAULT_POINTS, refinements: int = 2) -> OracleReport:
    x_bar = np.asarray(x_bar, dtype=float)
    if mode == "grid":
        return _grid(cs, cost, x_bar, objective_cap, grid_points, refinements)
    if mode == "kkt_enumeration":
        return _kkt_enumeration(cs, cost, x_bar)
    if mode == "sampling":
        return _sampling(cs, cost, x_bar, seed, objective_cap)
    raise ValueError(f"unknown oracle mode {mode!r}")


# ---------------------------------------------------------------------------
# bounding boxes
# ---------------------------------------------------------------------------

def _partial_box(cs: ConstraintSet) -> tuple[np.ndarray, np.ndarray]:
    """Intervals implied by single-coordinate rows; others are skipped."""
    lower = np.full(cs.n, -math.inf)
    upper = np.full(cs.n, math.inf)
    for r in range(cs.a_in.shape[0]):
        nz = np.nonzero(cs.a_in[r])[0]
        if nz.size != 1:
            continue
        c = int(nz[0])
        w = cs.a_in[r, c]
        if w > 0:
            lower[c] = max(lower[c], cs.b_in[r] / w)
        else:
            upper[c] = min(upper[c], cs.b_in[r] / w)
    for r in range(cs.a_eq.shape[0]):
        nz = np.nonzero(cs.a_eq[r])[0]
        if nz.size != 1:
            continue
        c = int(nz[0])
        val = cs.b_eq[r] / cs.a_eq[r, c]
        lower[c] = max(lower[c], val)
        upper[c] = min(upper[c], val)
    return lower, upper


def _cap_radius(cost: CostFunction, cap: float | None, n: int) -> np.ndarray:
    """Per-coordinate radius of the cost sublevel set {E <= cap} around x_bar."""
    radius = np.full(n, math.inf)
    if cap is None:
        return radius
    cap = max(float(cap), 0.0) + 1e-9
    for d in range(n):
        best = math.inf
        if cost.lam1[d] > 0:
            best = cap / cost.lam1[d]
        if cost.quad_diag is not None and cost.quad_diag[d] > 0:
            best = min(best, math.sqrt(cap / cost.quad_diag[d]))
        radius[d] = best
    if cost.quad is not None:
        eigmin = float(np.linalg.eigvalsh(cost.quad)[0])
        if eigmin > 1e-12:
            radius = np.minimum(radius, math.sqrt(cap / eigmin))
    return radius


def _search_box(cs: ConstraintSet, cost: CostFunction, x_bar: np.ndarray,
                cap: float | None) -> tuple[np.ndarray, np.ndarray]:
    lower, upper = _partial_box(cs)
    radius = _cap_radius(cost, cap, cs.n)
    fallback = 10.0 * (1.0 + float(np.max(np.abs(x_bar))))
    for d in range(cs.n):
        r = radius[d] if math.isfinite(radius[d]) else fallback
        lower[d] = max(lower[d], x_bar[d] - r)
        upper[d] = min(upper[d], x_bar[d] + r)
    return lower, upper


def _feasible_mask(cs: ConstraintSet, xs: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    mask = np.ones(xs.shape[0], dtype=bool)
    if cs.a_in.shape[0]:
        mask &= np.all(xs @ cs.a_in.T >= cs.b_in - tol, axis=1)
    if cs.a_eq.shape[0]:
        mask &= np.all(np.abs(xs @ cs.a_eq.T - cs.b_eq) <= tol, axis=1)
    return mask


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

def _grid(cs: ConstraintSet, cost: CostFunction, x_bar: np.ndarray,
          cap: float | None, points: int, refinements: int) -> OracleReport:
    """Lattice scan with refinements around the best few basins.

    Refining around a single incumbent can lock onto the wrong side of a
    slanted facet (the true optimum hides in a sliver the coarse lattice
    missed), so each pass zooms into a window around up to _GRID_SEEDS
    well-separated leaders. The reported resolution is the objective-scale
    variation of the cost over the final refinement window, not the raw
    lattice spacing.
    """
    if cs.n > 4:
        raise OracleTooLarge(f"grid oracle limited to 4 coordinates, got {cs.n}")
    lower, upper = _search_box(cs, cost, x_bar, cap)
    if np.any(lower > upper):
        return OracleReport("grid", math.inf, None)
    integral = set(cs.integrality)

    def scan(lo, hi):
        axes = []
        spacing = np.zeros(cs.n)
        for d in range(cs.n):
            if d in integral:
                vals = np.array([v for v in (0.0, 1.0) if lo[d] - 1e-9 <= v <= hi[d] + 1e-9])
                if vals.size == 0:
                    return None, None, spacing
                axes.append(vals)
            elif hi[d] - lo[d] <= 1e-12:
                axes.append(np.array([lo[d]]))
            else:
                axes.append(np.linspace(lo[d], hi[d], points))
                spacing[d] = (hi[d] - lo[d]) / (points - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        xs = np.stack([m.ravel() for m in mesh], axis=1)
        mask = _feasible_mask(cs, xs)
        if not np.any(mask):
            return None, None, spacing
        feas = xs[mask]
        return feas, eval_cost_many(cost, feas, x_bar), spacing

    best_obj = math.inf
    best_x = None
    best_spacing = np.zeros(cs.n)
    total_feasible = 0
    boxes = [(lower.copy(), upper.copy())]
    for _ in range(refinements + 1):
        candidates = []
        for lo, hi in boxes:
            feas, vals, spacing = scan(lo, hi)
            if feas is None:
                continue
            total_feasible += feas.shape[0]
            order = np.argsort(vals)
            for i in order[:_GRID_SEEDS * 4]:
                candidates.append((float(vals[i]), feas[i], spacing))
        if not candidates:
            break
        candidates.sort(key=lambda c: c[0])
        if candidates[0][0] < best_obj:
            best_obj = candidates[0][0]
            best_x = candidates[0][1].copy()
            best_spacing = candidates[0][2].copy()
        elif (best_x is not None and candidates[0][0] == best_obj
              and np.array_equal(candidates[0][1], best_x)
              and np.all(candidates[0][2] <= best_spacing)):
            # a finer pass re-confirmed the same incumbent: the uncertainty
            # window shrinks to the finer lattice
            best_spacing = candidates[0][2].copy()
        leaders = []
        for obj, x, spacing in candidates:
            close = False
            for _, lx, lsp in leaders:
                sep = np.maximum(np.maximum(spacing, lsp), 1e-12)
                if np.all(np.abs(x - lx) <= 1.5 * sep):
                    close = True
                    break
            if not close:
                leaders.append((obj, x, spacing))
            if len(leaders) >= _GRID_SEEDS:
                break
        boxes = []
        for _, x, spacing in leaders:
            w = 2.0 * spacing
            boxes.append((np.maximum(lower, x - w), np.minimum(upper, x + w)))
    if best_x is None:
        return OracleReport("grid", math.inf, None, n_feasible=total_feasible)
    res = cost_local_variation(cost, best_x, x_bar, 2.0 * best_spacing)
    return OracleReport("grid", best_obj, best_x, resolution=res,
                        n_feasible=total_feasible)


def cost_local_variation(cost: CostFunction, x: np.ndarray, x_bar: np.ndarray,
                         half_widths: np.ndarray) -> float:
    """Upper bound on |E(x + e) - E(x)| over |e_d| <= half_widths[d].

    Triangle-inequality bound; used to turn a lattice spacing into an honest
    objective tolerance when comparing grid minima against exact solves.
    """
    h = np.asarray(half_widths, dtype=float)
    delta = np.asarray(x, dtype=float) - np.asarray(x_bar, dtype=float)
    bound = float(cost.lam1 @ h)
    q = cost.quad_matrix()
    if q is not None:
        bound += float(np.abs(2.0 * (q @ delta)) @ h + h @ np.abs(q) @ h)
    return bound


# ---------------------------------------------------------------------------
# active-set / vertex enumeration
# ---------------------------------------------------------------------------

def _kkt_enumeration(cs: ConstraintSet, cost: CostFunction, x_bar: np.ndarray) -> OracleReport:
    prog = assemble_program(cost, x_bar, cs)
    m_in = prog.a_in.shape[0]
    m_eq = prog.a_eq.shape[0]
    if m_in + m_eq > 20:
        raise OracleTooLarge(f"kkt enumeration limited to 20 rows, got {m_in + m_eq}")
    n = prog.n
    best_obj = math.inf
    best_x = None
    count = 0

    if prog.quadratic is None:
        k = n - m_eq
        if k < 0 or k > m_in:
            return OracleReport("kkt_enumeration", math.inf, None)
        for subset in itertools.combinations(range(m_in), k):
            count += 1
            if count > _MAX_COMBOS:
                raise OracleTooLarge("vertex enumeration exceeded the combination budget")
            a = np.vstack([prog.a_eq, prog.a_in[list(subset)]]) if m_eq else prog.a_in[list(subset)]
            b = np.concatenate([prog.b_eq, prog.b_in[list(subset)]]) if m_eq else prog.b_in[list(subset)]
            try:
                x = np.linalg.solve(a, b)
            except np.linalg.LinAlgError:
                continue
            obj = _candidate_objective(prog, x)
            if obj is not None and obj < best_obj:
                best_obj = obj
                best_x = x
    else:
        q2 = 2.0 * prog.quad_dense()
        max_active = min(m_in, n - m_eq)
        for size in range(0, max_active + 1):
            for subset in itertools.combinations(range(m_in), size):
                count += 1
                if count > _MAX_COMBOS:
                    raise OracleTooLarge("active-set enumeration exceeded the combination budget")
                rows = list(subset)
                a_act = np.vstack([prog.a_eq, prog.a_in[rows]]) if rows or m_eq else np.zeros((0, n))
                b_act = np.concatenate([prog.b_eq, prog.b_in[rows]]) if rows or m_eq else np.zeros(0)
                w = a_act.shape[0]
                kkt = np.zeros((n + w, n + w))
                kkt[:n, :n] = q2
                if w:
                    kkt[:n, n:] = a_act.T
                    kkt[n:, :n] = a_act
                rhs = np.concatenate([-prog.linear, b_act])
                sol, _, _, _ = np.linalg.lstsq(kkt, rhs, rcond=None)
                if np.max(np.abs(kkt @ sol - rhs), initial=0.0) > 1e-8 * (1.0 + np.max(np.abs(rhs), initial=0.0)):
                    continue       # stationarity unreachable with this active set
                x = sol[:n]
                obj = _candidate_objective(prog, x)
                if obj is not None and obj < best_obj - 1e-15:
                    best_obj = obj
                    best_x = x
    trimmed = None if best_x is None else best_x[:cost.dim]
    return OracleReport("kkt_enumeration", best_obj, trimmed, n_feasible=count)


def _candidate_objective(prog: ProgramInstance, x: np.ndarray) -> float | None:
    if not np.all(np.isfinite(x)):
        return None
    if prog.a_in.shape[0] and np.min(prog.a_in @ x - prog.b_in) < -1e-8:
        return None
    if prog.a_eq.shape[0] and np.max(np.abs(prog.a_eq @ x - prog.b_eq)) > 1e-8:
        return None
    return prog.objective(x)


# ---------------------------------------------------------------------------
# rejection sampling
# ---------------------------------------------------------------------------

def _sampling(cs: ConstraintSet, cost: CostFunction, x_bar: np.ndarray,
              seed: int, cap: float | None) -> OracleReport:
    rng = np.random.default_rng(seed)
    lower, upper = _search_box(cs, cost, x_bar, cap)
    if np.any(lower > upper):
        return OracleReport("sampling", math.inf, None)
    in_block = np.zeros(cs.n, dtype=bool)
    for start, stop in cs.one_hot_blocks:
        in_block[start:stop] = True

    xs = np.empty((_SAMPLES, cs.n))
    for d in range(cs.n):
        if in_block[d]:
            continue
        if d in cs.integrality:
            xs[:, d] = rng.integers(0, 2, _SAMPLES).astype(float)
        else:
            xs[:, d] = rng.uniform(lower[d], upper[d], _SAMPLES)
    for start, stop in cs.one_hot_blocks:
        picks = rng.integers(0, stop - start, _SAMPLES)
        xs[:, start:stop] = 0.0
        xs[np.arange(_SAMPLES), start + picks] = 1.0

    mask = _feasible_mask(cs, xs)
    if not np.any(mask):
        return OracleReport("sampling", math.inf, None)
    feas = xs[mask]
    vals = eval_cost_many(cost, feas, x_bar)
    i = int(np.argmin(vals))
    return OracleReport("sampling", float(vals[i]), feas[i].copy(),
                        n_feasible=int(np.sum(mask)))


# ---------------------------------------------------------------------------
# exhaustive mixed-integer oracle
# ---------------------------------------------------------------------------

def enumerate_mixed_minimum(cs: ConstraintSet, cost: CostFunction, x_bar: np.ndarray):
    """Try every category assignment; solve each continuous subproblem.

    Returns (objective, x) with objective = +inf when no assignment is
    feasible. The per-assignment solves use the continuous solvers, which are
    themselves verified against the grid and enumeration oracles; what this
    checks independently is the branch-and-bound search logic.
    """
    from .qp import solve_qp
    from .simplex import solve_lp

    blocks = cs.one_hot_blocks
    sizes = [stop - start for start, stop in blocks]
    total = 1
    for s in sizes:
        total *= s
    if total > 4096:
        raise OracleTooLarge(f"{total} assignments exceed the enumeration budget")

    prog = assemble_program(cost, x_bar, cs)
    best_obj = math.inf
    best_x = None
    for assignment in itertools.product(*[range(s) for s in sizes]):
        rows = []
        rhs = []
        for (start, stop), pick in zip(blocks, assignment):
            for i, c in enumerate(range(start, stop)):
                row = np.zeros(prog.n)
                row[c] = 1.0
                rows.append(row)
                rhs.append(1.0 if i == pick else 0.0)
        a_eq = np.vstack([prog.a_eq] + rows) if rows else prog.a_eq
        b_eq = np.concatenate([prog.b_eq, rhs]) if rhs else prog.b_eq
        sub = ProgramInstance(n=prog.n, quadratic=prog.quadratic, linear=prog.linear,
                              a_eq=a_eq, b_eq=b_eq, a_in=prog.a_in, b_in=prog.b_in,
                              constant=prog.constant)
        out = solve_lp(sub) if sub.quadratic is None else solve_qp(sub)
        if out.status == STATUS_OPTIMAL and out.objective < best_obj:
            best_obj = out.objective
            best_x = out.x[:cost.dim].copy()
    return best_obj, best_x
