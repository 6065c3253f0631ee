"""Convex program container and the independent KKT certificate checker.

A ProgramInstance is the one shape every solver path consumes:

    minimize   v' P v + c' v + const
    subject to A_eq v  = b_eq
               A_in v >= b_in

over v in R^n (the encoded coordinates plus any L1 auxiliaries). P is PSD and
possibly zero; there is no 1/2 factor, so the gradient is 2 P v + c. The
`constant` offset lets the program objective equal the user-facing cost
E(x; x_bar) exactly.

check_kkt is deliberately independent of solver internals: it recomputes
stationarity, primal/dual feasibility and complementary slackness from the
program and a claimed SolveOutcome only.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import MalformedDocument

FEAS_TOL = 1e-9    # absolute, on unit-norm rows
KKT_TOL = 1e-8     # relative, scaled by 1 + |objective|

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_UNBOUNDED = "unbounded"


def _as_matrix(a, n: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1) if a.size else a.reshape(0, n)
    return a


@dataclass
class ProgramInstance:
    """One per-leaf continuous problem (or a relaxation of one).

    quadratic is the PSD matrix Q of v'Qv: an n x n array, a length-n array
    standing for diag(q) (the common separable case, kept 1-D so high-D
    instances never materialize an n^2 matrix), or None for zero.
    """

    n: int
    quadratic: np.ndarray | None
    linear: np.ndarray                  # length n
    a_eq: np.ndarray                    # m_eq x n
    b_eq: np.ndarray
    a_in: np.ndarray                    # m_in x n
    b_in: np.ndarray
    constant: float = 0.0
    warm_start: np.ndarray | None = None

    def __post_init__(self):
        self.linear = np.asarray(self.linear, dtype=float).reshape(self.n)
        self.a_eq = _as_matrix(self.a_eq, self.n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(self.a_eq.shape[0])
        self.a_in = _as_matrix(self.a_in, self.n)
        self.b_in = np.asarray(self.b_in, dtype=float).reshape(self.a_in.shape[0])
        if self.quadratic is not None:
            self.quadratic = np.asarray(self.quadratic, dtype=float)
            if self.quadratic.shape not in ((self.n, self.n), (self.n,)):
                raise ValueError("quadratic matrix shape mismatch")
            if not np.any(self.quadratic):
                self.quadratic = None
        if self.warm_start is not None:
            self.warm_start = np.asarray(self.warm_start, dtype=float).reshape(self.n)

    # -- objective ----------------------------------------------------------

    def objective(self, v: np.ndarray) -> float:
        val = float(self.linear @ v) + self.constant
        if self.quadratic is not None:
            if self.quadratic.ndim == 1:
                val += float(self.quadratic @ (v * v))
            else:
                val += float(v @ self.quadratic @ v)
        return val

    def gradient(self, v: np.ndarray) -> np.ndarray:
        g = self.linear.copy()
        if self.quadratic is not None:
            if self.quadratic.ndim == 1:
                g += 2.0 * self.quadratic * v
            else:
                g += 2.0 * (self.quadratic @ v)
        return g

    def quad_dense(self) -> np.ndarray | None:
        """Quadratic part as a dense matrix (None when zero)."""
        if self.quadratic is None:
            return None
        if self.quadratic.ndim == 1:
            return np.diag(self.quadratic)
        return self.quadratic

    @property
    def is_linear(self) -> bool:
        return self.quadratic is None

    # -- row scaling ---------------------------------------------------------

    def normalized(self) -> "ProgramInstance":
        """Copy with all constraint rows scaled to unit norm.

        Zero inequality rows with rhs <= tol are dropped; zero rows with a
        positive rhs are kept (they make phase 1 report infeasibility).
        Feasibility tolerances throughout the package are absolute on these
        scaled rows.
        """
        a_in, b_in = _scale_rows(self.a_in, self.b_in, drop_trivial=True)
        a_eq, b_eq = _scale_rows(self.a_eq, self.b_eq, drop_trivial=False)
        return replace(self, a_in=a_in, b_in=b_in, a_eq=a_eq, b_eq=b_eq)


def _scale_rows(a: np.ndarray, b: np.ndarray, drop_trivial: bool) -> tuple[np.ndarray, np.ndarray]:
    if a.shape[0] == 0:
        return a, b
    norms = np.linalg.norm(a, axis=1)
    keep = np.ones(a.shape[0], dtype=bool)
    scaled_a = a.copy()
    scaled_b = b.copy()
    for i, nm in enumerate(norms):
        if nm > 1e-300:
            scaled_a[i] /= nm
            scaled_b[i] /= nm
        elif drop_trivial and b[i] <= FEAS_TOL:
            keep[i] = False
        # zero row, positive rhs: kept as an unsatisfiable marker
    return scaled_a[keep], scaled_b[keep]


@dataclass
class SolveOutcome:
    """Result of one solver call, with certificates.

    On optimal: kkt_residual <= KKT_TOL * (1 + |objective|), inequality duals
    nonnegative, complementary slackness within tolerance (all re-checked by
    check_kkt, never assumed).
    """

    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    active_rows: list[int] = field(default_factory=list)
    ineq_duals: np.ndarray | None = None
    eq_duals: np.ndarray | None = None
    kkt_residual: float = float("nan")
    iterations: int = 0

    def to_document(self) -> dict:
        return {
            "status": self.status,
            "x": None if self.x is None else [float(v) for v in self.x],
            "objective": None if np.isnan(self.objective) else float(self.objective),
            "active_rows": [int(i) for i in self.active_rows],
            "ineq_duals": None if self.ineq_duals is None else [float(v) for v in self.ineq_duals],
            "eq_duals": None if self.eq_duals is None else [float(v) for v in self.eq_duals],
            "kkt_residual": None if np.isnan(self.kkt_residual) else float(self.kkt_residual),
            "iterations": int(self.iterations),
        }


def program_to_document(prog: ProgramInstance) -> dict:
    """Debug dump consumed by the certify CLI subcommand."""
    return {
        "n": prog.n,
        "quadratic": None if prog.quadratic is None else prog.quad_dense().tolist(),
        "linear": prog.linear.tolist(),
        "a_eq": prog.a_eq.tolist(),
        "b_eq": prog.b_eq.tolist(),
        "a_in": prog.a_in.tolist(),
        "b_in": prog.b_in.tolist(),
        "constant": prog.constant,
    }


def outcome_from_document(doc: dict) -> SolveOutcome:
    if not isinstance(doc, dict) or "status" not in doc:
        raise MalformedDocument("outcome document needs a 'status'")

    def arr(key):
        v = doc.get(key)
        return None if v is None else np.asarray(v, dtype=float)

    obj = doc.get("objective")
    kkt = doc.get("kkt_residual")
    return SolveOutcome(
        status=str(doc["status"]),
        x=arr("x"),
        objective=float("nan") if obj is None else float(obj),
        active_rows=[int(i) for i in doc.get("active_rows") or []],
        ineq_duals=arr("ineq_duals"),
        eq_duals=arr("eq_duals"),
        kkt_residual=float("nan") if kkt is None else float(kkt),
        iterations=int(doc.get("iterations") or 0),
    )


def program_from_document(doc: dict) -> ProgramInstance:
    n = int(doc["n"])
    quad = doc.get("quadratic")
    return ProgramInstance(
        n=n,
        quadratic=None if quad is None else np.asarray(quad, dtype=float),
        linear=np.asarray(doc["linear"], dtype=float),
        a_eq=np.asarray(doc.get("a_eq", []), dtype=float).reshape(-1, n) if doc.get("a_eq") else np.zeros((0, n)),
        b_eq=np.asarray(doc.get("b_eq", []), dtype=float),
        a_in=np.asarray(doc.get("a_in", []), dtype=float).reshape(-1, n) if doc.get("a_in") else np.zeros((0, n)),
        b_in=np.asarray(doc.get("b_in", []), dtype=float),
        constant=float(doc.get("constant", 0.0)),
    )


# ---------------------------------------------------------------------------
# independent certificate checker
# ---------------------------------------------------------------------------

def check_kkt(prog: ProgramInstance, outcome: SolveOutcome) -> dict:
    """Verify a claimed optimal outcome against its program.

    Returns a dict of residual components plus the combined 'kkt_residual'
    and a 'pass' flag at KKT_TOL * (1 + |objective|). Works on the scaled
    program so the tolerances mean the same thing for every solver path.

    Components: stationarity |g - A_in' mu - A_eq' nu| (normalized by
    1 + |g|), primal violations on both row kinds, dual nonnegativity, and
    complementary slackness |mu_i * slack_i| normalized by 1 + |objective|.
    """
    if outcome.status != STATUS_OPTIMAL or outcome.x is None:
        return {"pass": False, "reason": f"status {outcome.status}"}
    p = prog.normalized()
    x = np.asarray(outcome.x, dtype=float)
    mu = outcome.ineq_duals
    nu = outcome.eq_duals
    mu = np.zeros(p.a_in.shape[0]) if mu is None else np.asarray(mu, dtype=float)
    nu = np.zeros(p.a_eq.shape[0]) if nu is None else np.asarray(nu, dtype=float)
    if mu.shape[0] != p.a_in.shape[0] or nu.shape[0] != p.a_eq.shape[0]:
        return {"pass": False, "reason": "dual length mismatch"}

    g = p.gradient(x)
    res = g.copy()
    if p.a_in.shape[0]:
        res -= p.a_in.T @ mu
    if p.a_eq.shape[0]:
        res -= p.a_eq.T @ nu
    stationarity = float(np.max(np.abs(res))) / (1.0 + float(np.max(np.abs(g))) if g.size else 1.0)

    slack = p.a_in @ x - p.b_in if p.a_in.shape[0] else np.zeros(0)
    primal_in = float(np.max(np.maximum(0.0, -slack))) if slack.size else 0.0
    primal_eq = float(np.max(np.abs(p.a_eq @ x - p.b_eq))) if p.a_eq.shape[0] else 0.0
    dual_neg = float(np.max(np.maximum(0.0, -mu))) if mu.size else 0.0
    obj = prog.objective(x)
    comp = float(np.max(np.abs(mu * slack))) / (1.0 + abs(obj)) if mu.size else 0.0

    kkt_residual = max(stationarity, primal_in, primal_eq, dual_neg, comp)
    return {
        "stationarity": stationarity,
        "primal_ineq": primal_in,
        "primal_eq": primal_eq,
        "dual_negativity": dual_neg,
        "complementary_slackness": comp,
        "kkt_residual": kkt_residual,
        "objective_gap": abs(obj - outcome.objective),
        "pass": kkt_residual <= KKT_TOL * (1.0 + abs(obj)),
    }
