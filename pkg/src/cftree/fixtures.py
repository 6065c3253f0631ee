"""Self-contained test-asset generation.

Everything the test suite and the benchmark harness consume is generated
here from seeds: gaussian-blob datasets, a minimal greedy axis-aligned
trainer (Gini impurity, midpoint thresholds, majority leaves), a random
labeled oblique-tree generator with balanced splits, a mixed-schema tabular
dataset in the shape of a census income table, and a randomized search for
trees where relaxation rounding fails. Real-dataset ingestion is out of
scope on purpose; nothing here downloads anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateData, GenerationFailed, MalformedDocument
from .schema import (
    CATEGORICAL,
    CONTINUOUS,
    FeatureDecl,
    FeatureSchema,
    decode,
    encode,
    schema_from_document,
    schema_to_document,
)
from .tree import AXIS_ALIGNED, OBLIQUE, DecisionNode, LeafNode, TreeModel


@dataclass
class SyntheticDataset:
    """Encoded instance matrix plus labels, reproducible from its seed."""

    schema: FeatureSchema
    x: np.ndarray                 # N x encoded_dim
    labels: np.ndarray            # N ints in 1..K
    seed: int | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.x.shape[0] != self.labels.shape[0]:
            raise MalformedDocument("instance/label count mismatch")


def make_blobs(d: int, k: int, n_per_class: int, seed: int,
               spread: float = 1.0, center_scale: float = 4.0) -> SyntheticDataset:
    """K gaussian blobs in R^d with well-separated random centers."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, center_scale, size=(k, d))
    xs = []
    ys = []
    for label in range(1, k + 1):
        pts = centers[label - 1] + rng.normal(0.0, spread, size=(n_per_class, d))
        xs.append(pts)
        ys.append(np.full(n_per_class, label))
    features = tuple(FeatureDecl(name=f"f{i}", kind=CONTINUOUS) for i in range(d))
    schema = FeatureSchema(features=features, class_count=k)
    return SyntheticDataset(schema=schema, x=np.vstack(xs),
                            labels=np.concatenate(ys), seed=seed)


# ---------------------------------------------------------------------------
# greedy axis-aligned trainer
# ---------------------------------------------------------------------------

def _gini(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.sum(p * p))


def _best_split(x: np.ndarray, y: np.ndarray, k: int) -> tuple[int, float, float] | None:
    """(feature, threshold, gain) of the best Gini split, or None.

    Midpoint thresholds between consecutive distinct values; routing sends
    x_d >= threshold to the right child. Ties resolve to the lowest feature
    index, then the lowest threshold, via strict improvement scanning in
    order.
    """
    m, dims = x.shape
    total = np.bincount(y, minlength=k + 1)[1:].astype(float)
    parent = _gini(total)
    best = None
    best_gain = 1e-12
    onehot = np.zeros((m, k))
    onehot[np.arange(m), y - 1] = 1.0
    for d in range(dims):
        order = np.argsort(x[:, d], kind="stable")
        v = x[order, d]
        cum = np.cumsum(onehot[order], axis=0)          # class counts left of each cut
        boundary = np.nonzero(v[:-1] < v[1:])[0]
        if boundary.size == 0:
            continue
        left_n = (boundary + 1).astype(float)
        right_n = m - left_n
        left_counts = cum[boundary]
        right_counts = total - left_counts
        imp_l = 1.0 - np.sum((left_counts / left_n[:, None]) ** 2, axis=1)
        imp_r = 1.0 - np.sum((right_counts / right_n[:, None]) ** 2, axis=1)
        weighted = (left_n * imp_l + right_n * imp_r) / m
        gains = parent - weighted
        i = int(np.argmax(gains))
        if gains[i] > best_gain:
            best_gain = float(gains[i])
            threshold = float((v[boundary[i]] + v[boundary[i] + 1]) / 2.0)
            best = (d, threshold, best_gain)
    return best


def train_axis_aligned(data: SyntheticDataset, max_depth: int) -> TreeModel:
    """Greedy Gini trainer over encoded coordinates.

    Deterministic given the data order. Raises DegenerateData when the data
    carries a single class.
    """
    if np.unique(data.labels).size < 2:
        raise DegenerateData("training data has a single class")
    k = data.schema.class_count
    dim = data.schema.encoded_dim
    nodes: list = []
    next_id = [1]

    def majority(y: np.ndarray) -> int:
        counts = np.bincount(y, minlength=k + 1)[1:]
        return int(np.argmax(counts)) + 1

    def build(idx: np.ndarray, depth: int) -> int:
        node_id = next_id[0]
        next_id[0] += 1
        y = data.labels[idx]
        split = None
        if depth < max_depth and np.unique(y).size > 1:
            split = _best_split(data.x[idx], y, k)
        if split is None:
            nodes.append(LeafNode(id=node_id, label=majority(y)))
            return node_id
        d, threshold, _ = split
        go_right = data.x[idx, d] >= threshold
        # reserve this id as a decision node; children get fresh ids preorder
        left = build(idx[~go_right], depth + 1)
        right = build(idx[go_right], depth + 1)
        w = np.zeros(dim)
        w[d] = 1.0
        nodes.append(DecisionNode(id=node_id, weights=w, bias=-threshold,
                                  left=left, right=right))
        return node_id

    root = build(np.arange(data.x.shape[0]), 0)
    return TreeModel(kind=AXIS_ALIGNED, root=root, nodes=nodes, schema=data.schema)


def training_error(tree: TreeModel, data: SyntheticDataset) -> float:
    from .tree import predict
    wrong = sum(1 for i in range(data.x.shape[0])
                if predict(tree, data.x[i]) != int(data.labels[i]))
    return wrong / data.x.shape[0]


# ---------------------------------------------------------------------------
# random oblique trees
# ---------------------------------------------------------------------------

def gen_random_oblique(d: int, depth: int, k: int, seed: int,
                       reference_pool: int | None = None) -> TreeModel:
    """Complete binary tree with unit-sphere hyperplanes and balanced splits.

    Biases are empirical quantiles (in [0.3, 0.7]) of the routed reference
    pool's projections, so each child keeps at least 10% of its parent's
    samples; degenerate draws are retried up to 50 times before
    GenerationFailed. Leaf labels are round-robin over 1..K left to right, so
    every class owns at least one leaf when 2^depth >= K.
    """
    if depth < 1 or k < 2:
        raise GenerationFailed("need depth >= 1 and K >= 2")
    rng = np.random.default_rng(seed)
    n_ref = reference_pool or max(256, 50 * (2 ** depth))
    pool = rng.normal(0.0, 1.0, size=(n_ref, d))

    features = tuple(FeatureDecl(name=f"f{i}", kind=CONTINUOUS) for i in range(d))
    schema = FeatureSchema(features=features, class_count=k)

    nodes: list = []
    next_id = [1]
    leaf_counter = [0]

    def build(samples: np.ndarray, level: int) -> int:
        node_id = next_id[0]
        next_id[0] += 1
        if level == depth:
            label = (leaf_counter[0] % k) + 1
            leaf_counter[0] += 1
            nodes.append(LeafNode(id=node_id, label=label))
            return node_id
        for _ in range(50):
            w = rng.normal(0.0, 1.0, size=d)
            norm = np.linalg.norm(w)
            if norm < 1e-12:
                continue
            w /= norm
            proj = samples @ w
            q = rng.uniform(0.3, 0.7)
            cut = float(np.quantile(proj, q))
            go_right = proj >= cut
            n_r = int(np.sum(go_right))
            n_l = samples.shape[0] - n_r
            floor = max(1, int(0.1 * samples.shape[0]))
            if n_l < floor or n_r < floor:
                continue
            left = build(samples[~go_right], level + 1)
            right = build(samples[go_right], level + 1)
            nodes.append(DecisionNode(id=node_id, weights=w, bias=-cut,
                                      left=left, right=right))
            return node_id
        raise GenerationFailed(
            f"no balanced split after 50 tries at level {level} "
            f"({samples.shape[0]} samples)")

    root = build(pool, 0)
    return TreeModel(kind=OBLIQUE, root=root, nodes=nodes, schema=schema)


# ---------------------------------------------------------------------------
# mixed-schema tabular fixture
# ---------------------------------------------------------------------------

def adult_like_schema() -> FeatureSchema:
    return FeatureSchema(
        features=(
            FeatureDecl(name="age", kind=CONTINUOUS, lower=18.0, upper=90.0),
            FeatureDecl(name="education_years", kind=CONTINUOUS, lower=1.0, upper=16.0),
            FeatureDecl(name="hours_per_week", kind=CONTINUOUS, lower=1.0, upper=99.0),
            FeatureDecl(name="capital_gain", kind=CONTINUOUS, lower=0.0, upper=99999.0),
            FeatureDecl(name="sex", kind=CATEGORICAL, categories=("female", "male"),
                        immutable_by_default=True),
            FeatureDecl(name="workclass", kind=CATEGORICAL,
                        categories=("private", "government", "self_employed", "unemployed")),
            FeatureDecl(name="marital_status", kind=CATEGORICAL,
                        categories=("single", "married", "divorced")),
        ),
        class_count=2,
        class_names=("under_50k", "over_50k"),
    )


def make_adult_like(seed: int, n: int = 400) -> SyntheticDataset:
    """Tabular mixed-type dataset whose label leans on a few features.

    The label rule mixes education, hours, capital gain and marital status so
    a shallow tree can fit it but not perfectly.
    """
    rng = np.random.default_rng(seed)
    schema = adult_like_schema()
    rows = []
    labels = []
    workclass = schema.feature("workclass").categories
    marital = schema.feature("marital_status").categories
    sexes = schema.feature("sex").categories
    for _ in range(n):
        age = float(np.clip(rng.normal(40, 13), 18, 90))
        edu = float(np.clip(rng.normal(10, 3), 1, 16))
        hours = float(np.clip(rng.normal(40, 12), 1, 99))
        gain = float(max(0.0, rng.exponential(600) - 300))
        if gain > 20000:
            gain = 20000.0
        raw = {
            "age": age,
            "education_years": edu,
            "hours_per_week": hours,
            "capital_gain": gain,
            "sex": sexes[int(rng.integers(0, 2))],
            "workclass": workclass[int(rng.integers(0, 4))],
            "marital_status": marital[int(rng.integers(0, 3))],
        }
        score = (0.35 * (edu - 10) + 0.05 * (hours - 40) + 0.004 * gain
                 + (1.2 if raw["marital_status"] == "married" else 0.0)
                 + 0.02 * (age - 40) + rng.normal(0, 1.2))
        label = 2 if score > 0.8 else 1
        rows.append(raw)
        labels.append(label)
    x = np.vstack([encode(schema, r) for r in rows])
    labels = np.asarray(labels)
    # the invariant wants every declared class present
    if np.unique(labels).size < 2:
        labels[0] = 1
        labels[1] = 2
    return SyntheticDataset(schema=schema, x=x, labels=labels, seed=seed)


# ---------------------------------------------------------------------------
# dataset files: {"schema": ..., "rows": [[raw values]], "labels": [...]}
# ---------------------------------------------------------------------------

def dataset_to_document(data: SyntheticDataset) -> dict:
    names = [f.name for f in data.schema.features]
    rows = []
    for i in range(data.x.shape[0]):
        raw = decode(data.schema, data.x[i])
        rows.append([raw[name] for name in names])
    return {
        "schema": schema_to_document(data.schema),
        "rows": rows,
        "labels": [int(v) for v in data.labels],
        "seed": data.seed,
    }


def dataset_from_document(doc: dict) -> SyntheticDataset:
    if not isinstance(doc, dict) or "schema" not in doc or "rows" not in doc:
        raise MalformedDocument("dataset document needs schema and rows")
    schema = schema_from_document(doc["schema"])
    names = [f.name for f in schema.features]
    rows = doc["rows"]
    labels = doc.get("labels")
    if labels is None or len(labels) != len(rows):
        raise MalformedDocument("labels missing or wrong length")
    x = np.vstack([encode(schema, dict(zip(names, row))) for row in rows]) \
        if rows else np.zeros((0, schema.encoded_dim))
    return SyntheticDataset(schema=schema, x=x,
                            labels=np.asarray(labels, dtype=int),
                            seed=doc.get("seed"))


def save_dataset(data: SyntheticDataset, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(dataset_to_document(data), fh, indent=1)


def load_dataset(path: str) -> SyntheticDataset:
    with open(path) as fh:
        return dataset_from_document(json.load(fh))


# ---------------------------------------------------------------------------
# rounding-pitfall search
# ---------------------------------------------------------------------------

def _random_mixed_case(seed: int):
    """Small oblique tree over one continuous + one categorical feature."""
    from .constraints import UserConstraints, compile_constraints
    from .cost import CostFunction
    from .tree import leaf_region, predict, target_leaves

    rng = np.random.default_rng(seed)
    c = int(rng.integers(3, 5))
    schema = FeatureSchema(
        features=(
            FeatureDecl(name="u", kind=CONTINUOUS, lower=-4.0, upper=4.0),
            FeatureDecl(name="cat", kind=CATEGORICAL,
                        categories=tuple(f"c{i}" for i in range(c))),
        ),
        class_count=2,
    )
    dim = schema.encoded_dim
    nodes = []
    # depth-2 complete oblique tree, labels alternating
    ids = iter(range(1, 8))
    root_id = next(ids)
    dec = []
    for _ in range(3):
        w = rng.normal(0.0, 1.0, size=dim)
        w /= np.linalg.norm(w)
        b = float(rng.uniform(-0.8, 0.8))
        dec.append((w, b))
    n2, n3, n4, n5, n6, n7 = (next(ids) for _ in range(6))
    nodes.append(DecisionNode(id=root_id, weights=dec[0][0], bias=dec[0][1], left=n2, right=n3))
    nodes.append(DecisionNode(id=n2, weights=dec[1][0], bias=dec[1][1], left=n4, right=n5))
    nodes.append(DecisionNode(id=n3, weights=dec[2][0], bias=dec[2][1], left=n6, right=n7))
    for leaf_id, label in ((n4, 1), (n5, 2), (n6, 2), (n7, 1)):
        nodes.append(LeafNode(id=leaf_id, label=label))
    tree = TreeModel(kind=OBLIQUE, root=root_id, nodes=nodes, schema=schema)

    raw = {"u": float(rng.uniform(-3, 3)),
           "cat": schema.feature("cat").categories[int(rng.integers(0, c))]}
    x_bar = encode(schema, raw)
    source = predict(tree, x_bar)
    target = 1 if source == 2 else 2
    cost = CostFunction.l2(dim, weights=np.concatenate([[1.0], rng.uniform(0.3, 3.0, size=c)]))
    leaves = target_leaves(tree, {target})
    cases = []
    for leaf in leaves:
        region = leaf_region(tree, leaf)
        cs = compile_constraints(schema, x_bar, UserConstraints(), region, epsilon=0.0)
        cases.append((leaf, cs))
    return tree, schema, x_bar, cost, cases


def search_rounding_pitfall(kind: str, seed_start: int = 0, max_seeds: int = 5000):
    """Find a seed where relax_and_round fails against solve_mixed.

    kind "infeasible": the rounded point violates the leaf polytope.
    kind "suboptimal": rounding stays feasible but exceeds the exact optimum
    by more than 1e-6. Returns (seed, leaf, detail) or None.
    """
    from .cost import assemble_program
    from .mixed import relax_and_round, solve_mixed
    from .program import STATUS_OPTIMAL

    for seed in range(seed_start, seed_start + max_seeds):
        try:
            tree, schema, x_bar, cost, cases = _random_mixed_case(seed)
        except Exception:
            continue
        for leaf, cs in cases:
            if not cs.integrality:
                continue
            prog = assemble_program(cost, x_bar, cs)
            rounded = relax_and_round(prog, cs.integrality, cs.one_hot_blocks)
            if rounded["relaxation_status"] != STATUS_OPTIMAL:
                continue
            try:
                exact = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
            except Exception:
                continue
            if kind == "infeasible" and not rounded["feasible"] \
                    and exact.status == STATUS_OPTIMAL:
                return seed, leaf, {"rounded": rounded, "exact_objective": exact.objective}
            if kind == "suboptimal" and rounded["feasible"] \
                    and exact.status == STATUS_OPTIMAL \
                    and rounded["objective"] > exact.objective + 1e-6:
                return seed, leaf, {"rounded_objective": rounded["objective"],
                                    "exact_objective": exact.objective}
    return None
