"""Primal active-set solver for the per-leaf quadratic programs.

Handles minimize v'Gv + c'v + const over A_eq v = b_eq, A_in v >= b_in with
G PSD or zero (zero G makes it an LP; kept so the simplex and active-set
paths can be cross-checked on the same inputs).

Equalities are always eliminated up front: pin rows (single-coordinate
equalities from freezes) reduce by index selection, anything more general by
an orthonormal null basis of A_eq. The active set then works in the reduced
space u, where x = x0 + Z u. Because Z has orthonormal columns the reduced
inequality duals are valid for the original rows as they stand, and the
equality duals are recovered at the end from the stationarity residual.

The iteration keeps a working set W of inequality rows treated as
equalities. Each step solves the equality-constrained subproblem

    minimize g'p + p'Gp   subject to  A_W p = 0

via a range-space (Schur) solve when G is positive definite, with a diagonal
fast path, and via a null-space eigendecomposition when G is singular or
zero (which also detects descent rays, i.e. unboundedness). A blocking row
encountered with a'p < 0 is automatically independent of A_W, so the working
set never needs rank repair. Degenerate stalls switch the pivoting rules to
lowest-index after 3 * rows consecutive zero steps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import IterationLimit, NumericalBreakdown
from .program import (
    FEAS_TOL,
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    STATUS_UNBOUNDED,
    ProgramInstance,
    SolveOutcome,
    check_kkt,
)
from .simplex import solve_lp

_BLOCK_TOL = 1e-12     # |a'p| below this is not a blocking row
_ZERO_ROW = 1e-9       # reduced row treated as identically zero
_DUAL_TOL = 1e-9


@dataclass
class _Reduction:
    """Affine reparametrization x = x0 + Z u after equality elimination."""

    x0: np.ndarray
    kind: str                      # "identity" | "select" | "dense"
    z: np.ndarray | None           # free index array or dense basis

    def lift(self, u: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return u
        if self.kind == "select":
            x = self.x0.copy()
            x[self.z] = u
            return x
        return self.x0 + self.z @ u

    def project_rows(self, a: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return a
        if self.kind == "select":
            return a[:, self.z]
        return a @ self.z

    def project_point(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return x
        if self.kind == "select":
            return x[self.z]
        return self.z.T @ (x - self.x0)

    @property
    def dim(self) -> int:
        if self.kind == "identity":
            return self.x0.size
        if self.kind == "select":
            return self.z.size
        return self.z.shape[1]


def _eliminate_equalities(p: ProgramInstance) -> _Reduction | None:
    """Build x = x0 + Z u from A_eq x = b_eq; None when inconsistent."""
    m_eq = p.a_eq.shape[0]
    n = p.n
    if m_eq == 0:
        return _Reduction(np.zeros(n), "identity", None)

    nonzeros = np.count_nonzero(p.a_eq, axis=1)
    if np.all(nonzeros == 1):
        # pin rows: x_i = b / w, conflicts mean an empty feasible set
        pinned: dict[int, float] = {}
        for r in range(m_eq):
            i = int(np.nonzero(p.a_eq[r])[0][0])
            val = p.b_eq[r] / p.a_eq[r, i]
            if i in pinned and abs(pinned[i] - val) > 1e-9:
                return None
            pinned[i] = val
        x0 = np.zeros(n)
        for i, val in pinned.items():
            x0[i] = val
        free = np.array([i for i in range(n) if i not in pinned], dtype=int)
        return _Reduction(x0, "select", free)

    x0, _, _, _ = np.linalg.lstsq(p.a_eq, p.b_eq, rcond=None)
    resid = p.a_eq @ x0 - p.b_eq
    if np.max(np.abs(resid), initial=0.0) > 1e-8 * (1.0 + np.max(np.abs(p.b_eq), initial=0.0)):
        return None
    _, s, vt = np.linalg.svd(p.a_eq, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * (s[0] if s.size else 1.0)))
    z = vt[rank:].T                        # n x (n - rank), orthonormal columns
    return _Reduction(x0, "dense", z)


class _Hessian:
    """Cached solve against H = 2G with a diagonal fast path.

    Construction raises LinAlgError when H is not positive definite; callers
    fall back to the null-space path in that case.
    """

    def __init__(self, h: np.ndarray):
        diag = h if h.ndim == 1 else np.diagonal(h)
        if h.ndim == 1 or np.count_nonzero(h - np.diag(diag)) == 0:
            if np.min(diag) <= 0:
                raise np.linalg.LinAlgError("diagonal not positive")
            self._diag = diag.copy()
            self._inv = None
        else:
            np.linalg.cholesky(h)          # PD test; raises if not
            self._diag = None
            self._inv = np.linalg.inv(h)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self._diag is not None:
            if b.ndim == 1:
                return b / self._diag
            return b / self._diag[:, None]
        return self._inv @ b


def _qmul(g: np.ndarray, u: np.ndarray) -> np.ndarray:
    """G @ u for a dense or diagonal (1-D) quadratic part."""
    return g * u if g.ndim == 1 else g @ u


def _null_basis(a: np.ndarray, k: int) -> np.ndarray:
    if a.shape[0] == 0:
        return np.eye(k)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * (s[0] if s.size else 1.0)))
    return vt[rank:].T


def _eqp_step(g_mat: np.ndarray | None, hess: _Hessian | None, grad: np.ndarray,
              a: np.ndarray, working: list[int]):
    """Solve min grad'p + p'Gp s.t. A_W p = 0.

    Returns (p, duals_or_None, ray). ray means the objective decreases
    without bound along p inside the working-set subspace.
    """
    k = grad.size
    if hess is not None:
        if not working:
            return -hess.solve(grad), np.zeros(0), False
        a_w = a[working]
        stacked = hess.solve(np.vstack([grad, a_w]).T)     # k x (1+w)
        h_g = stacked[:, 0]
        h_a = stacked[:, 1:]
        schur = a_w @ h_a
        rhs = a_w @ h_g
        try:
            mu = np.linalg.solve(schur, rhs)
        except np.linalg.LinAlgError:
            mu = np.linalg.lstsq(schur, rhs, rcond=None)[0]
        p = h_a @ mu - h_g
        return p, mu, False

    a_w = a[working] if working else np.zeros((0, k))
    z_w = _null_basis(a_w, k)
    if z_w.shape[1] == 0:
        return np.zeros(k), None, False
    rhs = -(z_w.T @ grad)
    if g_mat is None:
        # pure LP step: steepest descent inside the null space
        if np.max(np.abs(rhs), initial=0.0) <= 1e-11 * (1.0 + np.max(np.abs(grad), initial=0.0)):
            return np.zeros(k), None, False
        return z_w @ rhs, None, True

    if g_mat.ndim == 1:
        h_red = z_w.T @ (2.0 * g_mat[:, None] * z_w)
    else:
        h_red = z_w.T @ (2.0 * g_mat) @ z_w
    h_red = 0.5 * (h_red + h_red.T)
    eigvals, eigvecs = np.linalg.eigh(h_red)
    scale = max(float(eigvals[-1]) if eigvals.size else 0.0, 1.0)
    if eigvals.size and eigvals[0] < -1e-9 * scale:
        # negative curvature; PSD inputs should never reach here, but a
        # descent ray is still the honest answer if they do
        v = eigvecs[:, 0]
        if rhs @ v < 0:
            v = -v
        return z_w @ v, None, True
    pos = eigvals > 1e-12 * scale
    inv = np.where(pos, 1.0 / np.where(pos, eigvals, 1.0), 0.0)
    y = eigvecs @ (inv * (eigvecs.T @ rhs))
    resid = h_red @ y - rhs
    if np.max(np.abs(resid), initial=0.0) > 1e-9 * (1.0 + np.max(np.abs(rhs), initial=0.0)):
        # rhs has a component in the null space of the reduced Hessian:
        # linear decrease with zero curvature, an unattained infimum
        comp = eigvecs[:, ~pos] @ (eigvecs[:, ~pos].T @ rhs)
        return z_w @ comp, None, True
    return z_w @ y, None, False


def _feasible(a: np.ndarray, b: np.ndarray, u: np.ndarray, tol: float) -> bool:
    if a.shape[0] == 0:
        return True
    return float(np.min(a @ u - b)) >= -tol


def _phase_one(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray | None, int]:
    """Feasible point for A u >= b via an LP in (u, s), or None."""
    m, k = a.shape
    a_aug = np.hstack([a, np.ones((m, 1))])
    s_row = np.zeros((1, k + 1))
    s_row[0, k] = 1.0
    linear = np.zeros(k + 1)
    linear[k] = 1.0
    lp = ProgramInstance(
        n=k + 1, quadratic=None, linear=linear,
        a_eq=np.zeros((0, k + 1)), b_eq=np.zeros(0),
        a_in=np.vstack([a_aug, s_row]), b_in=np.concatenate([b, [0.0]]),
    )
    out = solve_lp(lp)
    if out.status != STATUS_OPTIMAL:
        return None, out.iterations
    if out.objective > FEAS_TOL * (1.0 + np.max(np.abs(b), initial=0.0)):
        return None, out.iterations
    return out.x[:k], out.iterations


def solve_qp(prog: ProgramInstance) -> SolveOutcome:
    """Active-set solve of a PSD quadratic (or linear) program.

    Returns a SolveOutcome whose duals live on the row-normalized program,
    matching what check_kkt verifies. Raises IterationLimit past
    50 * (vars + rows) iterations and NumericalBreakdown when the linear
    algebra stops producing finite numbers.
    """
    p = prog.normalized()
    red = _eliminate_equalities(p)
    if red is None:
        return SolveOutcome(status=STATUS_INFEASIBLE)
    k = red.dim
    m_all = p.a_in.shape[0]

    a_proj = red.project_rows(p.a_in) if m_all else np.zeros((0, k))
    b_proj = p.b_in - (p.a_in @ red.x0) if m_all else np.zeros(0)

    # rows that vanish in the reduced space are either trivial or unsatisfiable
    kept_idx = []
    for r in range(m_all):
        if np.max(np.abs(a_proj[r]), initial=0.0) <= _ZERO_ROW:
            if b_proj[r] > 1e-8:
                return SolveOutcome(status=STATUS_INFEASIBLE)
        else:
            kept_idx.append(r)
    kept = np.asarray(kept_idx, dtype=int)
    a_red = a_proj[kept] if kept.size else np.zeros((0, k))
    b_red = b_proj[kept] if kept.size else np.zeros(0)
    m = a_red.shape[0]

    if p.quadratic is None:
        g_red = None
    elif p.quadratic.ndim == 1:
        if red.kind == "identity":
            g_red = p.quadratic
        elif red.kind == "select":
            g_red = p.quadratic[red.z]
        else:
            g_red = red.z.T @ (p.quadratic[:, None] * red.z)
    elif red.kind == "identity":
        g_red = p.quadratic
    elif red.kind == "select":
        g_red = p.quadratic[np.ix_(red.z, red.z)]
    else:
        g_red = red.z.T @ p.quadratic @ red.z
    if g_red is not None and not np.any(g_red):
        g_red = None
    c_red = red.project_rows(p.gradient(red.x0).reshape(1, -1))[0]

    total_iters = 0
    if k == 0:
        x = red.x0
        if not _feasible(p.a_in, p.b_in, x, FEAS_TOL * 10):
            return SolveOutcome(status=STATUS_INFEASIBLE)
        mu = np.zeros(m_all)
        return _finish(prog, p, x, mu, total_iters)

    # starting point: warm start if it projects feasibly, else origin, else LP
    u = None
    if p.warm_start is not None:
        cand = red.project_point(p.warm_start)
        if _feasible(a_red, b_red, cand, FEAS_TOL * 10):
            u = cand
    if u is None and _feasible(a_red, b_red, np.zeros(k), FEAS_TOL * 10):
        u = np.zeros(k)
    if u is None:
        u, lp_iters = _phase_one(a_red, b_red) if m else (np.zeros(k), 0)
        total_iters += lp_iters
        if u is None:
            return SolveOutcome(status=STATUS_INFEASIBLE)

    hess = None
    if g_red is not None:
        try:
            hess = _Hessian(2.0 * g_red)
        except np.linalg.LinAlgError:
            hess = None

    max_iter = 50 * (k + m + 1)
    zero_limit = 3 * max(m, 1)
    working: list[int] = []
    in_working = np.zeros(m, dtype=bool)
    zero_steps = 0
    bland = False
    iters = 0

    while True:
        iters += 1
        if iters > max_iter:
            raise IterationLimit(f"active set exceeded {max_iter} iterations")
        grad = c_red if g_red is None else c_red + 2.0 * _qmul(g_red, u)
        if not np.all(np.isfinite(grad)):
            raise NumericalBreakdown("gradient lost finiteness")
        step, mu_w, ray = _eqp_step(g_red, hess, grad, a_red, working)

        step_size = float(np.max(np.abs(step), initial=0.0))
        if not ray and step_size <= 1e-11 * (1.0 + float(np.max(np.abs(u), initial=0.0))):
            if mu_w is None or len(working) != (0 if mu_w is None else mu_w.size):
                mu_w = (np.linalg.lstsq(a_red[working].T, grad, rcond=None)[0]
                        if working else np.zeros(0))
            negative = [i for i in range(len(working)) if mu_w[i] < -_DUAL_TOL]
            if not negative:
                break
            if bland:
                drop = min(negative, key=lambda i: working[i])
            else:
                drop = int(np.argmin(mu_w))
            row = working.pop(drop)
            in_working[row] = False
            zero_steps += 1
            if zero_steps > zero_limit:
                bland = True
            continue

        a_step = a_red @ step if m else np.zeros(0)
        slack = a_red @ u - b_red if m else np.zeros(0)
        candidates = np.nonzero(~in_working & (a_step < -_BLOCK_TOL))[0]
        if candidates.size:
            ratios = np.maximum(slack[candidates], 0.0) / (-a_step[candidates])
            best = float(np.min(ratios))
            if bland:
                near = candidates[ratios <= best + 1e-15]
                block = int(near.min())
            else:
                block = int(candidates[int(np.argmin(ratios))])
            alpha_block = max(float(slack[block]), 0.0) / float(-a_step[block])
        else:
            block = -1
            alpha_block = math.inf

        cap = math.inf if ray else 1.0
        alpha = min(cap, alpha_block)
        if math.isinf(alpha):
            return SolveOutcome(status=STATUS_UNBOUNDED, iterations=total_iters + iters)
        u = u + alpha * step
        if block >= 0 and alpha_block <= cap:
            working.append(block)
            in_working[block] = True
        if alpha <= 1e-12:
            zero_steps += 1
            if zero_steps > zero_limit:
                bland = True
        else:
            zero_steps = 0

    total_iters += iters
    x = red.lift(u)
    mu = np.zeros(m_all)
    for pos, row in enumerate(working):
        mu[kept[row]] = max(float(mu_w[pos]), 0.0)
    return _finish(prog, p, x, mu, total_iters)


def _finish(prog: ProgramInstance, p: ProgramInstance, x: np.ndarray,
            mu: np.ndarray, iterations: int) -> SolveOutcome:
    if not np.all(np.isfinite(x)):
        raise NumericalBreakdown("solution lost finiteness")
    grad = p.gradient(x)
    resid = grad - (p.a_in.T @ mu if p.a_in.shape[0] else 0.0)
    if p.a_eq.shape[0]:
        nu = np.linalg.lstsq(p.a_eq.T, resid, rcond=None)[0]
    else:
        nu = np.zeros(0)
    slack = p.a_in @ x - p.b_in if p.a_in.shape[0] else np.zeros(0)
    active = sorted(int(i) for i in np.nonzero(np.abs(slack) <= 1e-7)[0])
    out = SolveOutcome(
        status=STATUS_OPTIMAL,
        x=x,
        objective=p.objective(x),
        active_rows=active,
        ineq_duals=mu,
        eq_duals=nu,
        iterations=iterations,
    )
    report = check_kkt(prog, out)
    out.kkt_residual = report.get("kkt_residual", float("nan"))
    return out
