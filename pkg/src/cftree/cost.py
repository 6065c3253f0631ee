"""Cost catalog E(x; x_bar) and its lowering into solver programs.

Variants: weighted squared L2, weighted L1, a general quadratic d'Qd over the
delta d = x - x_bar (Q symmetric PSD within tolerance), and nonnegative
combinations. Combinations are flattened at construction, so every solver
sees at most one quadratic form plus one L1 block; that bounds the auxiliary
count at D.

Default weights are 1 everywhere; weights are surfaced in every interface and
never auto-normalized. Under L1 a category switch costs exactly 2*lambda (one
dummy rises 0->1, one falls 1->0); per-coordinate weights are the escape
hatch if that double-count is unwanted.

Lowering: L1 terms with positive weight introduce one auxiliary t_d with rows
t_d - (x_d - xbar_d) >= 0 and t_d + (x_d - xbar_d) >= 0 and objective weight
lambda_d; quadratic terms lower to x'Qx - 2 xbar'Q x + xbar'Q xbar directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, MalformedDocument, NonPSDMatrix

_PSD_RTOL = 1e-8


@dataclass
class CostFunction:
    """One cost in canonical form: lam1 (L1 weights) + quadratic part.

    The quadratic part is stored as quad_diag when diagonal (separable) or as
    a dense symmetric matrix otherwise. variant records what the user asked
    for, for document round-trips.
    """

    variant: str                       # "l1" | "l2" | "quadratic" | "combination"
    dim: int
    lam1: np.ndarray                   # length D, all >= 0
    quad_diag: np.ndarray | None       # length D, all >= 0
    quad: np.ndarray | None            # D x D symmetric PSD, None if diagonal
    psd_rank_deficient: bool = False

    # -- constructors --------------------------------------------------------

    @staticmethod
    def l2(dim: int, weights=None) -> "CostFunction":
        w = _weights(dim, weights)
        return CostFunction("l2", dim, np.zeros(dim), w, None)

    @staticmethod
    def l1(dim: int, weights=None) -> "CostFunction":
        w = _weights(dim, weights)
        return CostFunction("l1", dim, w, None, None)

    @staticmethod
    def quadratic(q: np.ndarray) -> "CostFunction":
        q = np.asarray(q, dtype=float)
        if q.ndim != 2 or q.shape[0] != q.shape[1]:
            raise MalformedDocument("q_matrix must be square")
        if not np.allclose(q, q.T, atol=1e-12, rtol=0.0):
            raise MalformedDocument("q_matrix must be symmetric")
        dim = q.shape[0]
        tol = _PSD_RTOL * max(float(np.max(np.diag(q))), 0.0)
        eigs = np.linalg.eigvalsh(q)
        if eigs[0] < -tol:
            raise NonPSDMatrix(f"minimum eigenvalue {eigs[0]:.3e} below -{tol:.3e}")
        deficient = bool(eigs[0] <= tol)
        if np.count_nonzero(q - np.diag(np.diag(q))) == 0:
            return CostFunction("quadratic", dim, np.zeros(dim),
                                np.clip(np.diag(q), 0.0, None), None,
                                psd_rank_deficient=deficient)
        return CostFunction("quadratic", dim, np.zeros(dim), None, q,
                            psd_rank_deficient=deficient)

    @staticmethod
    def combination(terms: list[tuple[float, "CostFunction"]]) -> "CostFunction":
        if not terms:
            raise MalformedDocument("combination needs at least one term")
        dim = terms[0][1].dim
        lam1 = np.zeros(dim)
        diag = np.zeros(dim)
        dense = None
        for coef, term in terms:
            coef = float(coef)
            if coef < 0:
                raise MalformedDocument("combination coefficients must be >= 0")
            if term.dim != dim:
                raise DimensionMismatch("combination terms disagree on dimension")
            lam1 += coef * term.lam1
            if term.quad is not None:
                dense = (np.zeros((dim, dim)) if dense is None else dense) + coef * term.quad
            elif term.quad_diag is not None:
                diag += coef * term.quad_diag
        if dense is not None:
            dense += np.diag(diag)
            flat = CostFunction.quadratic(dense)  # re-checks PSD of the sum
            return CostFunction("combination", dim, lam1, flat.quad_diag, flat.quad,
                                psd_rank_deficient=flat.psd_rank_deficient)
        return CostFunction("combination", dim, lam1, diag if np.any(diag) else None, None)

    def __post_init__(self):
        self.lam1 = np.asarray(self.lam1, dtype=float).reshape(self.dim)
        if np.any(self.lam1 < 0):
            raise MalformedDocument("L1 weights must be >= 0")
        if self.quad_diag is not None:
            self.quad_diag = np.asarray(self.quad_diag, dtype=float).reshape(self.dim)
            if np.any(self.quad_diag < 0):
                raise MalformedDocument("L2 weights must be >= 0")

    # -- views ----------------------------------------------------------------

    @property
    def is_separable(self) -> bool:
        """True when the cost decomposes per coordinate (no cross terms)."""
        return self.quad is None

    @property
    def has_l1(self) -> bool:
        return bool(np.any(self.lam1 > 0))

    @property
    def has_quadratic(self) -> bool:
        return self.quad is not None or (self.quad_diag is not None and np.any(self.quad_diag))

    def quad_matrix(self) -> np.ndarray | None:
        """Dense quadratic part, or None when there is none."""
        if self.quad is not None:
            return self.quad
        if self.quad_diag is not None and np.any(self.quad_diag):
            return np.diag(self.quad_diag)
        return None


def _weights(dim: int, weights) -> np.ndarray:
    if weights is None:
        return np.ones(dim)
    w = np.asarray(weights, dtype=float)
    if w.shape != (dim,):
        raise DimensionMismatch(f"weights length {w.shape} != {dim}")
    if np.any(w < 0):
        raise MalformedDocument("weights must be >= 0")
    return w


# ---------------------------------------------------------------------------
# evaluation and lowering
# ---------------------------------------------------------------------------

def eval_cost(cost: CostFunction, x: np.ndarray, x_bar: np.ndarray) -> float:
    """E(x; x_bar), always >= 0 and exactly 0 at x = x_bar."""
    x = np.asarray(x, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    if x.shape != (cost.dim,) or x_bar.shape != (cost.dim,):
        raise DimensionMismatch(f"expected dim {cost.dim}")
    delta = x - x_bar
    val = float(cost.lam1 @ np.abs(delta))
    if cost.quad is not None:
        val += float(delta @ cost.quad @ delta)
    elif cost.quad_diag is not None:
        val += float(cost.quad_diag @ delta**2)
    return val


def eval_cost_many(cost: CostFunction, xs: np.ndarray, x_bar: np.ndarray) -> np.ndarray:
    """E(x; x_bar) for every row of xs at once."""
    xs = np.asarray(xs, dtype=float)
    x_bar = np.asarray(x_bar, dtype=float)
    if xs.ndim != 2 or xs.shape[1] != cost.dim or x_bar.shape != (cost.dim,):
        raise DimensionMismatch(f"expected rows of dim {cost.dim}")
    delta = xs - x_bar
    vals = np.abs(delta) @ cost.lam1
    if cost.quad is not None:
        vals = vals + np.einsum("ij,jk,ik->i", delta, cost.quad, delta)
    elif cost.quad_diag is not None:
        vals = vals + delta**2 @ cost.quad_diag
    return vals


@dataclass
class LoweredCost:
    """Cost over the lifted variables v = (x, t).

    Minimizing v'quadratic v + linear'v + constant subject to aux rows
    (a_aux v >= b_aux) equals minimizing eval_cost over x, for any polytope
    in x. aux_dims[j] is the coordinate served by auxiliary j.
    """

    dim: int
    n: int
    quadratic: np.ndarray | None
    linear: np.ndarray
    constant: float
    a_aux: np.ndarray
    b_aux: np.ndarray
    aux_dims: list[int]

    def warm_point(self, x: np.ndarray, x_bar: np.ndarray) -> np.ndarray:
        """Lift x to (x, t) with t at its tight value |x - x_bar|."""
        v = np.zeros(self.n)
        v[:self.dim] = x
        for j, d in enumerate(self.aux_dims):
            v[self.dim + j] = abs(x[d] - x_bar[d])
        return v


def lower_to_program(cost: CostFunction, x_bar: np.ndarray) -> LoweredCost:
    """Lower a cost to its quadratic-plus-auxiliaries program form."""
    x_bar = np.asarray(x_bar, dtype=float)
    if x_bar.shape != (cost.dim,):
        raise DimensionMismatch(f"expected dim {cost.dim}")
    d = cost.dim
    aux_dims = [int(i) for i in np.nonzero(cost.lam1 > 0)[0]]
    n = d + len(aux_dims)

    quad = None
    linear = np.zeros(n)
    constant = 0.0
    if cost.quad is not None:
        quad = np.zeros((n, n))
        quad[:d, :d] = cost.quad
        linear[:d] = -2.0 * (cost.quad @ x_bar)
        constant = float(x_bar @ cost.quad @ x_bar)
    elif cost.quad_diag is not None and np.any(cost.quad_diag):
        # diagonal part stays 1-D so high-dimensional programs stay O(n)
        quad = np.zeros(n)
        quad[:d] = cost.quad_diag
        linear[:d] = -2.0 * cost.quad_diag * x_bar
        constant = float(cost.quad_diag @ x_bar**2)
    for j, dim_idx in enumerate(aux_dims):
        linear[d + j] = cost.lam1[dim_idx]

    # rows: t_j - x_d >= -xbar_d  and  t_j + x_d >= xbar_d
    a_aux = np.zeros((2 * len(aux_dims), n))
    b_aux = np.zeros(2 * len(aux_dims))
    for j, dim_idx in enumerate(aux_dims):
        a_aux[2 * j, dim_idx] = -1.0
        a_aux[2 * j, d + j] = 1.0
        b_aux[2 * j] = -x_bar[dim_idx]
        a_aux[2 * j + 1, dim_idx] = 1.0
        a_aux[2 * j + 1, d + j] = 1.0
        b_aux[2 * j + 1] = x_bar[dim_idx]

    return LoweredCost(dim=d, n=n, quadratic=quad, linear=linear,
                       constant=constant, a_aux=a_aux, b_aux=b_aux,
                       aux_dims=aux_dims)


def assemble_program(cost: CostFunction, x_bar: np.ndarray, cs,
                     warm_start: np.ndarray | None = None):
    """Combine a lowered cost with a compiled constraint set.

    cs needs fields n, a_eq, b_eq, a_in, b_in over the first `dim`
    coordinates; the result pads its rows with zeros over the auxiliaries and
    appends the auxiliary rows below. warm_start is an x-space point, lifted
    to (x, t) with the auxiliaries at their tight values.
    """
    from .program import ProgramInstance

    lowered = lower_to_program(cost, x_bar)
    d, n = lowered.dim, lowered.n
    if cs.n != d:
        raise DimensionMismatch(f"constraint set over {cs.n} coords, cost over {d}")
    pad = n - d
    a_in = np.hstack([cs.a_in, np.zeros((cs.a_in.shape[0], pad))])
    a_in = np.vstack([a_in, lowered.a_aux]) if lowered.a_aux.shape[0] else a_in
    b_in = np.concatenate([cs.b_in, lowered.b_aux])
    a_eq = np.hstack([cs.a_eq, np.zeros((cs.a_eq.shape[0], pad))])
    warm = None
    if warm_start is not None:
        warm = lowered.warm_point(np.asarray(warm_start, dtype=float), np.asarray(x_bar, dtype=float))
    return ProgramInstance(
        n=n, quadratic=lowered.quadratic, linear=lowered.linear,
        a_eq=a_eq, b_eq=cs.b_eq.copy(), a_in=a_in, b_in=b_in,
        constant=lowered.constant, warm_start=warm,
    )


# ---------------------------------------------------------------------------
# document format
# ---------------------------------------------------------------------------
# {"variant": "l1"|"l2"|"quadratic"|"combination",
#  "weights"?: [D reals],
#  "q_matrix"?: dense row-major | {"grid": [h, w], "diag": 1.0, "neighbor": -0.25},
#  "terms"?: [{"coefficient": c, "cost": <cost document>}]}

def cost_from_document(doc: dict, dim: int) -> CostFunction:
    if not isinstance(doc, dict) or "variant" not in doc:
        raise MalformedDocument("cost document needs a 'variant'")
    variant = doc["variant"]
    if variant == "l1":
        return CostFunction.l1(dim, doc.get("weights"))
    if variant == "l2":
        return CostFunction.l2(dim, doc.get("weights"))
    if variant == "quadratic":
        return CostFunction.quadratic(_q_from_document(doc.get("q_matrix"), dim))
    if variant == "combination":
        terms_doc = doc.get("terms")
        if not isinstance(terms_doc, list) or not terms_doc:
            raise MalformedDocument("combination needs a nonempty 'terms' list")
        terms = []
        for td in terms_doc:
            if not isinstance(td, dict) or "coefficient" not in td or "cost" not in td:
                raise MalformedDocument("each term needs 'coefficient' and 'cost'")
            terms.append((float(td["coefficient"]), cost_from_document(td["cost"], dim)))
        return CostFunction.combination(terms)
    raise MalformedDocument(f"unknown cost variant {variant!r}")


def _q_from_document(q_doc, dim: int) -> np.ndarray:
    if q_doc is None:
        raise MalformedDocument("quadratic cost needs 'q_matrix'")
    if isinstance(q_doc, dict):
        return grid_coupling_matrix(
            q_doc["grid"][0], q_doc["grid"][1],
            diag=float(q_doc.get("diag", 1.0)),
            neighbor=float(q_doc.get("neighbor", -0.25)),
            expect_dim=dim,
        )
    q = np.asarray(q_doc, dtype=float)
    if q.shape != (dim, dim):
        raise DimensionMismatch(f"q_matrix shape {q.shape} != ({dim}, {dim})")
    return q


def grid_coupling_matrix(h: int, w: int, diag: float = 1.0,
                         neighbor: float = -0.25, expect_dim: int | None = None) -> np.ndarray:
    """Neighbor-coupled quadratic for h x w grid instances (row-major pixels).

    diag on the diagonal, neighbor at 4-neighbor off-diagonals. The default
    (1, -0.25) favors edits that move neighboring pixels together.
    """
    d = h * w
    if expect_dim is not None and d != expect_dim:
        raise DimensionMismatch(f"grid {h}x{w} gives dim {d}, expected {expect_dim}")
    q = np.zeros((d, d))
    np.fill_diagonal(q, diag)
    for r in range(h):
        for c in range(w):
            i = r * w + c
            if c + 1 < w:
                q[i, i + 1] = q[i + 1, i] = neighbor
            if r + 1 < h:
                q[i, i + w] = q[i + w, i] = neighbor
    return q


def cost_to_document(cost: CostFunction) -> dict:
    if cost.variant == "l1":
        return {"variant": "l1", "weights": cost.lam1.tolist()}
    if cost.variant == "l2":
        return {"variant": "l2", "weights": cost.quad_diag.tolist()}
    if cost.variant == "quadratic":
        q = cost.quad if cost.quad is not None else np.diag(cost.quad_diag)
        return {"variant": "quadratic", "q_matrix": q.tolist()}
    # flattened combination: one quadratic term plus one L1 term
    terms = []
    qm = cost.quad_matrix()
    if qm is not None:
        terms.append({"coefficient": 1.0, "cost": {"variant": "quadratic", "q_matrix": qm.tolist()}})
    if cost.has_l1:
        terms.append({"coefficient": 1.0, "cost": {"variant": "l1", "weights": cost.lam1.tolist()}})
    return {"variant": "combination", "terms": terms}
