"""Compiles user constraints plus a leaf region into one convex description.

The output ConstraintSet is the single shape every solver path consumes:
equality rows a'x = r, inequality rows a'x >= r, an integrality index set,
and the one-hot block layout. Row order is canonical so identical inputs
produce identical row lists:

    inequalities: region rows (margin-shifted), schema bounds, user bounds,
                  max-delta caps, monotone rows, one-hot [0,1] rows
    equalities:   freezes (coordinate order), one-hot sum rows (block order)

The margin epsilon shifts tree-path rows only, never schema bounds or user
rows; it exists to keep the answer safely inside the target leaf, not to
tighten user-declared limits. Frozen categorical features pin their whole
block as equalities and drop out of the integrality set. Features declared
immutable_by_default are frozen whether or not the user lists them.

Contradiction detection here is deliberately syntactic (a pinned value
outside declared bounds, an empty bound interval, a negative delta cap);
deeper infeasibility (an empty polytope) surfaces per leaf as solver
infeasibility, where phase 1 does that work anyway.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    ContradictoryConstraints,
    InvalidEpsilon,
    InvalidTarget,
    MalformedDocument,
    SchemaMismatch,
)
from .schema import CATEGORICAL, CONTINUOUS, FeatureSchema
from .tree import LeafRegion


@dataclass
class UserConstraints:
    """Parsed user constraint document.

    bounds / max_delta / monotone apply to continuous features only; freeze
    applies to any feature (a frozen categorical pins its whole block; there
    is no "freeze to a subset of categories").
    """

    freeze: tuple[str, ...] = ()
    bounds: dict = field(default_factory=dict)        # name -> (lo, hi)
    monotone: dict = field(default_factory=dict)      # name -> direction
    max_delta: dict = field(default_factory=dict)     # name -> cap >= 0
    epsilon: float = 0.0
    candidate_set: object = None                      # path or loaded pool
    label_source: str = "tree_prediction"             # | "ground_truth"


@dataclass
class TargetSpec:
    """What the counterfactual must achieve.

    single {y} and subset {yset} exclude the source class unless
    allow_same_class is set (same-class cost-improvement mode); class_cost
    carries a per-class price L(y) >= 0 and enumerates every class.
    """

    mode: str                                  # "single" | "subset" | "class_cost"
    y: int | None = None
    yset: frozenset | None = None
    class_costs: np.ndarray | None = None      # length K
    allow_same_class: bool = False

    @staticmethod
    def single(y: int, allow_same_class: bool = False) -> "TargetSpec":
        return TargetSpec("single", y=int(y), allow_same_class=allow_same_class)

    @staticmethod
    def subset(ys, allow_same_class: bool = False) -> "TargetSpec":
        return TargetSpec("subset", yset=frozenset(int(y) for y in ys),
                          allow_same_class=allow_same_class)

    @staticmethod
    def class_cost(costs) -> "TargetSpec":
        c = np.asarray(costs, dtype=float)
        if np.any(c < 0) or np.any(~np.isfinite(c)):
            raise InvalidTarget("class costs must be finite and >= 0")
        return TargetSpec("class_cost", class_costs=c)

    def target_classes(self, class_count: int, source_label: int) -> list[int]:
        """Classes whose leaves are enumerated; validates the target."""
        if self.mode == "single":
            ys = {self.y}
        elif self.mode == "subset":
            if not self.yset:
                raise InvalidTarget("subset target is empty")
            ys = set(self.yset)
        elif self.mode == "class_cost":
            if self.class_costs is None or self.class_costs.shape != (class_count,):
                raise InvalidTarget(f"class_cost needs {class_count} entries")
            return list(range(1, class_count + 1))
        else:
            raise InvalidTarget(f"unknown target mode {self.mode!r}")
        bad = [y for y in ys if not (1 <= y <= class_count)]
        if bad:
            raise InvalidTarget(f"classes {sorted(bad)} outside 1..{class_count}")
        if source_label in ys and not self.allow_same_class:
            if self.mode == "single":
                raise InvalidTarget(
                    f"target equals the source class {source_label}; "
                    "set allow_same_class for same-class improvement")
            # a subset containing the source means "any other class in here"
            ys = ys - {source_label}
            if not ys:
                raise InvalidTarget(
                    f"target only contains the source class {source_label}; "
                    "set allow_same_class for same-class improvement")
        return sorted(ys)

    def leaf_price(self, label: int) -> float:
        """Additive selection price L(label); 0 outside class_cost mode."""
        if self.mode == "class_cost":
            return float(self.class_costs[label - 1])
        return 0.0


@dataclass
class ConstraintSet:
    """Canonical convex description over the encoded coordinates.

    When candidate_set is present all other fields act as filters only (the
    engine searches the finite pool instead of solving).
    """

    n: int
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_in: np.ndarray
    b_in: np.ndarray
    integrality: tuple[int, ...] = ()
    one_hot_blocks: tuple[tuple[int, int], ...] = ()
    candidate_set: object = None
    n_region_rows: int = 0
    region_strict: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    def with_strict_margin(self, margin: float, include_weak: bool = False) -> "ConstraintSet":
        """Shift strict (left-branch) region rows by a positive margin.

        Used by the engine's boundary fix: an optimum sitting exactly on a
        left-branch hyperplane routes to the sibling, so those rows are
        re-solved strictly inside. include_weak also shifts the weak
        (right-branch) rows; a solver can return a point a few ulps on the
        wrong side of a weak row, which exact routing then sends left.
        """
        if self.n_region_rows == 0:
            return self
        if not include_weak and not np.any(self.region_strict):
            return self
        b_in = self.b_in.copy()
        if include_weak:
            b_in[:self.n_region_rows] += margin
        else:
            b_in[np.nonzero(self.region_strict)[0]] += margin
        return replace(self, b_in=b_in)


@dataclass
class _SchemaTables:
    """Static per-schema compilation tables, cached across leaves."""

    by_name: dict
    offset_of: dict
    lower_idx: np.ndarray      # coords with a finite schema lower bound
    lower_val: np.ndarray
    upper_idx: np.ndarray
    upper_val: np.ndarray
    eff_lo: np.ndarray         # schema-level per-coordinate interval
    eff_hi: np.ndarray
    immutable: tuple
    schema_monotone: tuple     # (name, direction, offset) in feature order
    categorical: tuple         # (name, start, stop) in feature order


_TABLE_CACHE: dict[int, tuple[FeatureSchema, _SchemaTables]] = {}


def _schema_tables(schema: FeatureSchema) -> _SchemaTables:
    hit = _TABLE_CACHE.get(id(schema))
    if hit is not None and hit[0] is schema:
        return hit[1]
    d = schema.encoded_dim
    by_name, offset_of = {}, {}
    lo_idx, lo_val, hi_idx, hi_val = [], [], [], []
    eff_lo = np.full(d, -math.inf)
    eff_hi = np.full(d, math.inf)
    immutable, schema_monotone, categorical = [], [], []
    for f, off in zip(schema.features, schema.offsets()):
        by_name[f.name] = f
        offset_of[f.name] = off
        if f.immutable_by_default:
            immutable.append(f.name)
        if f.kind == CONTINUOUS:
            if math.isfinite(f.lower):
                lo_idx.append(off)
                lo_val.append(f.lower)
                eff_lo[off] = f.lower
            if math.isfinite(f.upper):
                hi_idx.append(off)
                hi_val.append(f.upper)
                eff_hi[off] = f.upper
            if f.monotone is not None:
                schema_monotone.append((f.name, f.monotone, off))
        else:
            categorical.append((f.name, off, off + f.width))
    tables = _SchemaTables(
        by_name=by_name, offset_of=offset_of,
        lower_idx=np.asarray(lo_idx, dtype=int), lower_val=np.asarray(lo_val, dtype=float),
        upper_idx=np.asarray(hi_idx, dtype=int), upper_val=np.asarray(hi_val, dtype=float),
        eff_lo=eff_lo, eff_hi=eff_hi,
        immutable=tuple(immutable), schema_monotone=tuple(schema_monotone),
        categorical=tuple(categorical),
    )
    if len(_TABLE_CACHE) > 128:
        _TABLE_CACHE.clear()
    _TABLE_CACHE[id(schema)] = (schema, tables)
    return tables


def compile_constraints(schema: FeatureSchema, x_bar: np.ndarray,
                        user: UserConstraints | None,
                        region: LeafRegion | None,
                        epsilon: float = 0.0) -> ConstraintSet:
    """Compile the constraint catalog for one leaf (or no leaf).

    Pure function: identical inputs give identical row lists. See the module
    docstring for the canonical ordering and the epsilon scope.
    """
    user = user or UserConstraints()
    if not (isinstance(epsilon, (int, float)) and math.isfinite(epsilon)) or epsilon < 0:
        raise InvalidEpsilon(f"epsilon must be finite and >= 0, got {epsilon!r}")
    d = schema.encoded_dim
    x_bar = np.asarray(x_bar, dtype=float).reshape(d)
    t = _schema_tables(schema)

    for section, names in (("freeze", user.freeze), ("bounds", user.bounds),
                           ("monotone", user.monotone), ("max_delta", user.max_delta)):
        for name in names:
            if name not in t.by_name:
                raise SchemaMismatch(f"{section}: unknown feature {name!r}")
            if section != "freeze" and t.by_name[name].kind == CATEGORICAL:
                raise SchemaMismatch(f"{section}: {name!r} is categorical; only freeze applies")

    frozen = set(user.freeze) | set(t.immutable)

    # effective per-coordinate interval for the syntactic contradiction check
    eff_lo = t.eff_lo.copy()
    eff_hi = t.eff_hi.copy()

    # inequality rows are collected as (coordinate, coefficient, rhs) triples
    # and materialized in one shot; region rows are prepended as a block
    sparse_idx: list[int] = []
    sparse_coef: list[float] = []
    sparse_rhs: list[float] = []
    a_eq_rows: list[np.ndarray] = []
    b_eq_rows: list[float] = []

    def ineq(coef_idx: int, coef: float, rhs: float) -> None:
        sparse_idx.append(coef_idx)
        sparse_coef.append(coef)
        sparse_rhs.append(rhs)

    # (a) region rows, shifted by epsilon
    n_region = 0
    region_strict = np.zeros(0, dtype=bool)
    a_region = np.zeros((0, d))
    b_region = np.zeros(0)
    if region is not None:
        a_region = np.asarray(region.a, dtype=float)
        b_region = np.asarray(region.b, dtype=float) + epsilon
        n_region = region.rows
        region_strict = region.strict_left.copy()

    # (b) schema bounds on continuous coordinates
    for i, off in enumerate(t.lower_idx):
        ineq(int(off), 1.0, float(t.lower_val[i]))
    for i, off in enumerate(t.upper_idx):
        ineq(int(off), -1.0, -float(t.upper_val[i]))

    # (b') user bound intervals, in feature order
    for name in sorted(user.bounds, key=lambda nm: t.offset_of[nm]):
        off = t.offset_of[name]
        lo, hi = user.bounds[name]
        lo = -math.inf if lo is None else float(lo)
        hi = math.inf if hi is None else float(hi)
        if lo > hi:
            raise ContradictoryConstraints(f"bounds for {name!r}: [{lo}, {hi}] is empty")
        if math.isfinite(lo):
            ineq(off, 1.0, lo)
            eff_lo[off] = max(eff_lo[off], lo)
        if math.isfinite(hi):
            ineq(off, -1.0, -hi)
            eff_hi[off] = min(eff_hi[off], hi)
        if eff_lo[off] > eff_hi[off]:
            raise ContradictoryConstraints(
                f"bounds for {name!r} exclude the declared interval")

    # (f) interval caps |x_d - xbar_d| <= cap
    for name in sorted(user.max_delta, key=lambda nm: t.offset_of[nm]):
        off = t.offset_of[name]
        cap = float(user.max_delta[name])
        if cap < 0:
            raise ContradictoryConstraints(f"max_delta for {name!r} is negative")
        ineq(off, 1.0, x_bar[off] - cap)
        ineq(off, -1.0, -(x_bar[off] + cap))
        eff_lo[off] = max(eff_lo[off], x_bar[off] - cap)
        eff_hi[off] = min(eff_hi[off], x_bar[off] + cap)
        if eff_lo[off] > eff_hi[off]:
            raise ContradictoryConstraints(
                f"max_delta for {name!r} contradicts its bounds")

    # (d) monotone rows: schema declarations, then user overrides
    directions: dict[str, str] = {name: mono for name, mono, _ in t.schema_monotone}
    for name, direction in user.monotone.items():
        if direction not in ("nondecreasing", "nonincreasing"):
            raise MalformedDocument(f"monotone for {name!r}: bad direction {direction!r}")
        existing = directions.get(name)
        if existing is not None and existing != direction:
            raise ContradictoryConstraints(
                f"monotone for {name!r} conflicts with the schema declaration")
        directions[name] = direction
    for name in sorted(directions, key=lambda nm: t.offset_of[nm]):
        off = t.offset_of[name]
        if directions[name] == "nondecreasing":
            ineq(off, 1.0, x_bar[off])
            eff_lo[off] = max(eff_lo[off], x_bar[off])
        else:
            ineq(off, -1.0, -x_bar[off])
            eff_hi[off] = min(eff_hi[off], x_bar[off])
        if eff_lo[off] > eff_hi[off]:
            raise ContradictoryConstraints(
                f"monotone for {name!r} contradicts its bounds")

    # (c) freezes: equalities x_d = xbar_d (whole block for categoricals)
    for name in sorted(frozen, key=lambda nm: t.offset_of[nm]):
        f = t.by_name[name]
        off = t.offset_of[name]
        for c in range(off, off + f.width):
            if not (eff_lo[c] - 1e-12 <= x_bar[c] <= eff_hi[c] + 1e-12):
                raise ContradictoryConstraints(
                    f"freeze pins {name!r} outside its declared bounds")
            row = np.zeros(d)
            row[c] = 1.0
            a_eq_rows.append(row)
            b_eq_rows.append(float(x_bar[c]))

    # (e) one-hot rows + integrality for unfrozen categorical blocks
    integrality: list[int] = []
    blocks: list[tuple[int, int]] = []
    for name, start, stop in t.categorical:
        if name in frozen:
            continue
        blocks.append((start, stop))
        for c in range(start, stop):
            ineq(c, 1.0, 0.0)
            ineq(c, -1.0, -1.0)
            integrality.append(c)
        row = np.zeros(d)
        row[start:stop] = 1.0
        a_eq_rows.append(row)
        b_eq_rows.append(1.0)

    k = len(sparse_idx)
    a_sparse = np.zeros((k, d))
    if k:
        a_sparse[np.arange(k), np.asarray(sparse_idx)] = np.asarray(sparse_coef)
    a_in = np.vstack([a_region, a_sparse]) if n_region else a_sparse
    b_in = np.concatenate([b_region, np.asarray(sparse_rhs, dtype=float)])
    a_eq = np.asarray(a_eq_rows).reshape(len(a_eq_rows), d) if a_eq_rows else np.zeros((0, d))
    return ConstraintSet(
        n=d,
        a_eq=a_eq, b_eq=np.asarray(b_eq_rows, dtype=float),
        a_in=a_in, b_in=b_in,
        integrality=tuple(integrality),
        one_hot_blocks=tuple(blocks),
        candidate_set=user.candidate_set,
        n_region_rows=n_region,
        region_strict=region_strict,
    )


def check_feasible_point(cs: ConstraintSet, x: np.ndarray, tolerance: float = 1e-9) -> bool:
    """True iff x satisfies every compiled constraint within tolerance.

    Equalities within tolerance, inequalities >= -tolerance, integrality
    coordinates within tolerance of {0, 1}, one-hot block sums within
    tolerance of 1. candidate_set is ignored here.
    """
    x = np.asarray(x, dtype=float).reshape(cs.n)
    if cs.a_eq.shape[0] and np.max(np.abs(cs.a_eq @ x - cs.b_eq)) > tolerance:
        return False
    if cs.a_in.shape[0] and np.min(cs.a_in @ x - cs.b_in) < -tolerance:
        return False
    for c in cs.integrality:
        if min(abs(x[c]), abs(x[c] - 1.0)) > tolerance:
            return False
    for start, stop in cs.one_hot_blocks:
        if abs(float(np.sum(x[start:stop])) - 1.0) > tolerance:
            return False
    return True


def target_from_document(doc) -> TargetSpec:
    """Parse a target document.

    Accepted shapes: {"class": y}, {"classes": [..]}, {"class_costs": [..]},
    each optionally with "allow_same_class": bool. A bare integer means a
    single class.
    """
    if isinstance(doc, int) and not isinstance(doc, bool):
        return TargetSpec.single(doc)
    if not isinstance(doc, dict):
        raise MalformedDocument("target must be an integer or an object")
    allow = bool(doc.get("allow_same_class", False))
    keys = {"class", "classes", "class_costs"} & set(doc)
    if len(keys) != 1:
        raise InvalidTarget("target needs exactly one of class / classes / class_costs")
    if "class" in doc:
        y = doc["class"]
        if isinstance(y, bool) or not isinstance(y, int):
            raise MalformedDocument("target class must be an integer")
        return TargetSpec.single(y, allow_same_class=allow)
    if "classes" in doc:
        ys = doc["classes"]
        if not isinstance(ys, (list, tuple)):
            raise MalformedDocument("target classes must be a list")
        return TargetSpec.subset(ys, allow_same_class=allow)
    return TargetSpec.class_cost(doc["class_costs"])


def target_to_document(target: TargetSpec) -> dict:
    if target.mode == "single":
        doc: dict = {"class": target.y}
    elif target.mode == "subset":
        doc = {"classes": sorted(target.yset)}
    else:
        return {"class_costs": [float(v) for v in target.class_costs]}
    if target.allow_same_class:
        doc["allow_same_class"] = True
    return doc


# ---------------------------------------------------------------------------
# document format
# ---------------------------------------------------------------------------
# {"freeze": [names], "bounds": {name: [lo, hi]}, "monotone": {name: dir},
#  "max_delta": {name: real}, "epsilon": real, "candidate_set"?: path,
#  "label_source"?: "tree_prediction"|"ground_truth"}

def user_constraints_from_document(doc: dict | None) -> UserConstraints:
    if doc is None:
        return UserConstraints()
    if not isinstance(doc, dict):
        raise MalformedDocument("constraint document must be an object")
    known = {"freeze", "bounds", "monotone", "max_delta", "epsilon",
             "candidate_set", "label_source"}
    unknown = set(doc) - known
    if unknown:
        raise MalformedDocument(f"unknown constraint fields: {sorted(unknown)}")
    bounds = {}
    for name, pair in (doc.get("bounds") or {}).items():
        if not isinstance(pair, (list, tuple)) or len(pair) != 2:
            raise MalformedDocument(f"bounds for {name!r} must be [lo, hi]")
        bounds[name] = (pair[0], pair[1])
    label_source = doc.get("label_source", "tree_prediction")
    if label_source not in ("tree_prediction", "ground_truth"):
        raise MalformedDocument(f"bad label_source {label_source!r}")
    epsilon = doc.get("epsilon", 0.0)
    if not isinstance(epsilon, (int, float)):
        raise MalformedDocument("epsilon must be a number")
    return UserConstraints(
        freeze=tuple(doc.get("freeze") or ()),
        bounds=bounds,
        monotone=dict(doc.get("monotone") or {}),
        max_delta={k: float(v) for k, v in (doc.get("max_delta") or {}).items()},
        epsilon=float(epsilon),
        candidate_set=doc.get("candidate_set"),
        label_source=label_source,
    )


def user_constraints_to_document(user: UserConstraints) -> dict:
    doc: dict = {}
    if user.freeze:
        doc["freeze"] = list(user.freeze)
    if user.bounds:
        doc["bounds"] = {k: [v[0], v[1]] for k, v in user.bounds.items()}
    if user.monotone:
        doc["monotone"] = dict(user.monotone)
    if user.max_delta:
        doc["max_delta"] = dict(user.max_delta)
    if user.epsilon:
        doc["epsilon"] = user.epsilon
    if user.candidate_set is not None:
        doc["candidate_set"] = user.candidate_set
    if user.label_source != "tree_prediction":
        doc["label_source"] = user.label_source
    return doc
