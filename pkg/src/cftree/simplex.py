"""Dense two-phase simplex for the linear programs of the engine.

Handles min c'v subject to A_eq v = b_eq, A_in v >= b_in over free variables
(v is split into nonnegative halves internally). Phase 1 minimizes artificial
variables to find a basic feasible solution; phase 2 optimizes the real
objective. Row duals are read off the final reduced-cost row, so the KKT
certificates are exact by-products of the pivot path.

Anti-cycling: Dantzig pricing until 3 * rows degenerate pivots have occurred,
then Bland's rule (lowest eligible index) for the rest of the solve.
"""

from __future__ import annotations

import numpy as np

from .errors import NumericalBreakdown
from .program import (
    FEAS_TOL,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    ProgramInstance,
    SolveOutcome,
    check_kkt,
)

_PIVOT_TOL = 1e-10
_RCOST_TOL = 1e-10


def solve_lp(prog: ProgramInstance) -> SolveOutcome:
    """Two-phase simplex over a linear ProgramInstance.

    The quadratic part must be zero. The optimal point satisfies all rows
    within FEAS_TOL on unit-norm rows; infeasibility is declared iff the
    phase-1 optimum exceeds that tolerance; unboundedness is detected and
    reported as a status.
    """
    if prog.quadratic is not None:
        raise ValueError("solve_lp requires a zero quadratic part")
    p = prog.normalized()
    n = p.n
    m_eq, m_in = p.a_eq.shape[0], p.a_in.shape[0]
    m = m_eq + m_in

    if m == 0:
        if np.max(np.abs(p.linear), initial=0.0) > _RCOST_TOL:
            return SolveOutcome(status=STATUS_UNBOUNDED)
        x = np.zeros(n)
        return SolveOutcome(status=STATUS_OPTIMAL, x=x, objective=p.objective(x),
                            ineq_duals=np.zeros(0), eq_duals=np.zeros(0),
                            kkt_residual=0.0)

    # stacked rows: equalities first, then inequalities
    a = np.vstack([p.a_eq, p.a_in])
    b = np.concatenate([p.b_eq, p.b_in])
    is_eq = np.zeros(m, dtype=bool)
    is_eq[:m_eq] = True

    # columns: [v+ (n)] [v- (n)] [surplus (m_in)] [artificial (<= m)]
    # inequality row i: a x - s_i = b_i; rows then flipped so rhs >= 0.
    sigma = np.where(b < 0, -1.0, 1.0)
    n_sur = m_in
    sur_of_row = {m_eq + j: 2 * n + j for j in range(m_in)}

    body = np.hstack([a, -a, np.zeros((m, n_sur))])
    for r, c in sur_of_row.items():
        body[r, c] = -1.0
    body *= sigma[:, None]
    rhs = b * sigma

    # a flipped inequality's surplus column is +1: it serves as the initial
    # basic variable and that row needs no artificial.
    needs_art = [r for r in range(m) if is_eq[r] or sigma[r] > 0]
    art_of_row = {}
    art_cols = np.zeros((m, len(needs_art)))
    for k, r in enumerate(needs_art):
        art_cols[r, k] = 1.0
        art_of_row[r] = 2 * n + n_sur + k
    body = np.hstack([body, art_cols])
    n_cols = body.shape[1]
    art_mask = np.zeros(n_cols, dtype=bool)
    art_mask[2 * n + n_sur:] = True

    # tableau: m constraint rows plus a reduced-cost row, rhs in last column
    tab = np.zeros((m + 1, n_cols + 1))
    tab[:m, :n_cols] = body
    tab[:m, n_cols] = rhs
    basis = np.empty(m, dtype=int)
    for r in range(m):
        basis[r] = art_of_row.get(r, sur_of_row.get(r, -1))
    assert np.all(basis >= 0)

    state = _PivotState(rows=m)

    # ---- phase 1: minimize the artificial sum ------------------------------
    tab[m, :] = 0.0
    tab[m, art_mask.nonzero()[0]] = 1.0
    for r in range(m):
        if art_mask[basis[r]]:
            tab[m, :] -= tab[r, :]
    status = _iterate(tab, basis, allowed=~art_mask, state=state)
    if status == STATUS_UNBOUNDED:
        # phase-1 objective is bounded below by 0; this cannot happen
        raise NumericalBreakdown("phase-1 reported unbounded")
    phase1_obj = -tab[m, n_cols]
    if phase1_obj > FEAS_TOL * max(1.0, m):
        return SolveOutcome(status=STATUS_INFEASIBLE, iterations=state.pivots)

    # drive residual basic artificials out (or drop redundant rows)
    dropped = np.zeros(m, dtype=bool)
    for r in range(m):
        if not art_mask[basis[r]]:
            continue
        cands = np.nonzero(~art_mask[:n_cols] & (np.abs(tab[r, :n_cols]) > _PIVOT_TOL))[0]
        live = [c for c in cands if not art_mask[c]]
        if live:
            _pivot(tab, basis, r, live[0])
        else:
            dropped[r] = True  # redundant row; its dual is zero

    # ---- phase 2: the real objective ---------------------------------------
    cost = np.zeros(n_cols)
    cost[:n] = p.linear
    cost[n:2 * n] = -p.linear
    tab[m, :n_cols] = cost
    tab[m, n_cols] = 0.0
    for r in range(m):
        if dropped[r]:
            continue
        cj = cost[basis[r]]
        if cj != 0.0:
            tab[m, :] -= cj * tab[r, :]
    allowed = ~art_mask.copy()
    status = _iterate(tab, basis, allowed=allowed, state=state, skip_rows=dropped)
    if status == STATUS_UNBOUNDED:
        return SolveOutcome(status=STATUS_UNBOUNDED, iterations=state.pivots)

    # ---- extract point and duals -------------------------------------------
    v = np.zeros(n_cols)
    for r in range(m):
        if not dropped[r]:
            v[basis[r]] = tab[r, n_cols]
    x = v[:n] - v[n:2 * n]

    y = np.zeros(m)
    for r in range(m):
        if dropped[r]:
            continue
        probe = art_of_row.get(r, sur_of_row.get(r))
        y[r] = -tab[m, probe] * sigma[r]
    eq_duals = y[:m_eq]
    ineq_duals = np.clip(y[m_eq:], 0.0, None)

    slack = p.a_in @ x - p.b_in if m_in else np.zeros(0)
    active = [int(i) for i in np.nonzero(np.abs(slack) <= 1e-7)[0]]
    out = SolveOutcome(
        status=STATUS_OPTIMAL, x=x, objective=p.objective(x),
        active_rows=active, ineq_duals=ineq_duals, eq_duals=eq_duals,
        iterations=state.pivots,
    )
    out.kkt_residual = check_kkt(prog, out).get("kkt_residual", float("nan"))
    return out


class _PivotState:
    """Pivot counters shared by both phases: degeneracy triggers Bland."""

    def __init__(self, rows: int):
        self.pivots = 0
        self.degenerate = 0
        self.rows = rows
        self.budget = 10_000 + 400 * rows

    @property
    def bland(self) -> bool:
        return self.degenerate > 3 * self.rows


def _pivot(tab: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row, :] /= tab[row, col]
    coeffs = tab[:, col].copy()
    coeffs[row] = 0.0
    tab -= np.outer(coeffs, tab[row, :])
    tab[:, col] = 0.0
    tab[row, col] = 1.0
    basis[row] = col


def _iterate(tab, basis, allowed, state: _PivotState, skip_rows=None) -> str:
    m = basis.shape[0]
    n_cols = tab.shape[1] - 1
    rows = np.arange(m)
    if skip_rows is not None:
        rows = rows[~skip_rows]
    while True:
        if state.pivots > state.budget:
            raise NumericalBreakdown("pivot budget exceeded past anti-cycling switch")
        rc = tab[m, :n_cols]
        elig = np.nonzero(allowed & (rc < -_RCOST_TOL))[0]
        if elig.size == 0:
            return STATUS_OPTIMAL
        col = int(elig[0]) if state.bland else int(elig[np.argmin(rc[elig])])

        col_vals = tab[rows, col]
        pos = col_vals > _PIVOT_TOL
        if not np.any(pos):
            return STATUS_UNBOUNDED
        ratio = np.full(rows.shape, np.inf)
        ratio[pos] = tab[rows[pos], n_cols] / col_vals[pos]
        best = np.min(ratio)
        ties = rows[np.nonzero(ratio <= best + 1e-12)[0]]
        # tie-break on the lowest basic-variable index (Bland-compatible)
        row = int(min(ties, key=lambda r: basis[r]))
        if best <= 1e-10:
            state.degenerate += 1
        _pivot(tab, basis, row, col)
        state.pivots += 1
