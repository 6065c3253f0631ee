"""Hard-decision binary trees: routing, leaf regions, pruning, the JSON format.

Decision node i computes f_i(x) = w_i'x + b_i and routes right iff f_i(x) >= 0
(ties go right). A leaf's region is the intersection of its signed path
constraints z_j (w_j'x + b_j) >= 0, z_j = +1 for right turns and -1 for left
turns; left-turn rows are strict under routing (f < 0) but kept weak here so
per-leaf problems stay closed convex sets. The engine resolves boundary ties
after solving.

Axis-aligned trees (each w_i an indicator vector) additionally fold their
regions into per-dimension boxes [l, u].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadWeightDimension,
    CyclicStructure,
    DimensionMismatch,
    EmptyTargetSet,
    MalformedDocument,
    NotALeaf,
    SchemaMismatch,
    UnknownNodeReference,
)
from .schema import FeatureSchema, schema_from_document, schema_to_document

AXIS_ALIGNED = "axis_aligned"
OBLIQUE = "oblique"


@dataclass(frozen=True)
class DecisionNode:
    id: int
    weights: np.ndarray
    bias: float
    left: int
    right: int


@dataclass(frozen=True)
class LeafNode:
    id: int
    label: int  # class in 1..K


class TreeModel:
    """Immutable rooted binary tree over encoded vectors.

    Construction validates the full invariant set: single parent per node,
    no cycles, children exist, labels in 1..K, weight lengths equal to the
    schema's encoded dimension, and the one-indicator weight pattern when
    kind is axis_aligned.
    """

    def __init__(self, kind: str, root: int, nodes: list, schema: FeatureSchema):
        if kind not in (AXIS_ALIGNED, OBLIQUE):
            raise MalformedDocument(f"unknown tree kind {kind!r}")
        self.kind = kind
        self.root = int(root)
        self.schema = schema
        self.classes = schema.class_count
        self.nodes: dict[int, DecisionNode | LeafNode] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise MalformedDocument(f"duplicate node id {node.id}")
            if node.id < 1:
                raise MalformedDocument(f"node ids must be positive, got {node.id}")
            self.nodes[node.id] = node
        if self.root not in self.nodes:
            raise UnknownNodeReference(f"root id {self.root} not among nodes")
        self._validate_structure()
        self._validate_payloads()

    # -- validation ----------------------------------------------------------

    def _validate_structure(self) -> None:
        parents: dict[int, int] = {}
        stack, seen = [self.root], set()
        while stack:
            nid = stack.pop()
            if nid in seen:
                raise CyclicStructure(f"node {nid} reached twice")
            seen.add(nid)
            node = self.nodes[nid]
            if isinstance(node, DecisionNode):
                for child in (node.left, node.right):
                    if child not in self.nodes:
                        raise UnknownNodeReference(f"node {nid} references missing child {child}")
                    if child in parents:
                        raise CyclicStructure(f"node {child} has two parents")
                    parents[child] = nid
                    stack.append(child)
        unreachable = set(self.nodes) - seen
        if unreachable:
            raise MalformedDocument(f"unreachable nodes: {sorted(unreachable)}")

    def _validate_payloads(self) -> None:
        d = self.schema.encoded_dim
        for node in self.nodes.values():
            if isinstance(node, LeafNode):
                if not (1 <= node.label <= self.classes):
                    raise MalformedDocument(
                        f"leaf {node.id}: label {node.label} outside 1..{self.classes}")
                continue
            w = node.weights
            if w.shape != (d,):
                raise BadWeightDimension(f"node {node.id}: weight length {w.shape} != {d}")
            if self.kind == AXIS_ALIGNED:
                nz = np.nonzero(w)[0]
                if nz.size != 1 or w[nz[0]] != 1.0:
                    raise BadWeightDimension(
                        f"node {node.id}: axis_aligned weights must be a single 1 indicator")

    # -- basic views ---------------------------------------------------------

    @property
    def decision_ids(self) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if isinstance(n, DecisionNode))

    @property
    def leaf_ids(self) -> list[int]:
        return sorted(i for i, n in self.nodes.items() if isinstance(n, LeafNode))

    def leaf_label(self, leaf: int) -> int:
        node = self.nodes.get(leaf)
        if not isinstance(node, LeafNode):
            raise NotALeaf(f"node {leaf} is not a leaf")
        return node.label

    # -- routing -------------------------------------------------------------

    def route(self, x: np.ndarray) -> int:
        """Leaf id x is routed to (f_i(x) >= 0 goes right)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.schema.encoded_dim,):
            raise DimensionMismatch(
                f"expected dim {self.schema.encoded_dim}, got {x.shape}")
        nid = self.root
        while True:
            node = self.nodes[nid]
            if isinstance(node, LeafNode):
                return nid
            nid = node.right if float(node.weights @ x) + node.bias >= 0.0 else node.left


def predict(tree: TreeModel, x: np.ndarray) -> int:
    """Class label in 1..K of the leaf x is routed to."""
    return tree.nodes[tree.route(x)].label


# ---------------------------------------------------------------------------
# leaf regions
# ---------------------------------------------------------------------------

@dataclass
class LeafRegion:
    """Polytope of one leaf: rows a'x >= r with a = z*w, r = eps - z*b.

    strict_left marks rows that came from left branches: under routing those
    are strict (f < 0), so an optimum sitting exactly on such a row may be
    routed to the sibling. node_ids keeps the originating decision node per
    row. For axis-aligned trees lower/upper hold the folded box.
    """

    leaf: int
    path: list[int]                       # node ids root -> leaf
    a: np.ndarray                         # m x D
    b: np.ndarray                         # length m, rows a'x >= b
    strict_left: np.ndarray               # bool, length m
    node_ids: list[int]
    lower: np.ndarray | None = None       # axis-aligned box
    upper: np.ndarray | None = None

    @property
    def rows(self) -> int:
        return self.a.shape[0]


def leaf_region(tree: TreeModel, leaf: int) -> LeafRegion:
    """Signed path constraints of a leaf, root-to-leaf order.

    z_j = +1 when the path turns right at ancestor j, -1 when it turns left.
    Axis-aligned trees also fold the rows into per-dimension bounds, keeping
    the tightest threshold per side.
    """
    node = tree.nodes.get(leaf)
    if node is None or not isinstance(node, LeafNode):
        raise NotALeaf(f"node {leaf} is not a leaf")
    path = _path_to(tree, leaf)
    d = tree.schema.encoded_dim
    rows_a, rows_b, strict, origin = [], [], [], []
    for parent, child in zip(path, path[1:]):
        dec = tree.nodes[parent]
        z = 1.0 if child == dec.right else -1.0
        rows_a.append(z * dec.weights)
        rows_b.append(-z * dec.bias)
        strict.append(z < 0)
        origin.append(parent)
    a = np.asarray(rows_a, dtype=float).reshape(len(rows_a), d)
    b = np.asarray(rows_b, dtype=float)
    region = LeafRegion(
        leaf=leaf, path=path, a=a, b=b,
        strict_left=np.asarray(strict, dtype=bool),
        node_ids=origin,
    )
    if tree.kind == AXIS_ALIGNED:
        lower = np.full(d, -math.inf)
        upper = np.full(d, math.inf)
        for i in range(a.shape[0]):
            dim = int(np.nonzero(a[i])[0][0])
            if a[i, dim] > 0:
                lower[dim] = max(lower[dim], b[i])
            else:
                upper[dim] = min(upper[dim], -b[i])
        region.lower, region.upper = lower, upper
    return region


def _path_to(tree: TreeModel, target: int) -> list[int]:
    parent = {}
    stack = [tree.root]
    while stack:
        nid = stack.pop()
        node = tree.nodes[nid]
        if isinstance(node, DecisionNode):
            parent[node.left] = nid
            parent[node.right] = nid
            stack.extend((node.left, node.right))
    path = [target]
    while path[-1] != tree.root:
        path.append(parent[path[-1]])
    return list(reversed(path))


def prune_redundant(region: LeafRegion) -> LeafRegion:
    """Remove rows provably implied by the remaining rows.

    Axis-aligned regions drop dominated thresholds (same feature, same side,
    weaker bound). Oblique regions run one LP per row: row r is removed only
    when min a_r'x over the remaining rows exceeds b_r, i.e. the row cannot
    be active anywhere in the rest of the polytope. The feasible set is
    unchanged; strict_left markers survive on kept rows. Infeasible regions
    pass through unchanged (infeasibility surfaces at solve time).
    """
    m = region.rows
    if m <= 1:
        return region
    keep = np.ones(m, dtype=bool)

    axis = all(np.count_nonzero(region.a[i]) == 1 for i in range(m))
    if axis:
        best: dict[tuple[int, int], int] = {}  # (dim, side) -> row index
        for i in range(m):
            dim = int(np.nonzero(region.a[i])[0][0])
            coef = region.a[i, dim]
            side = 1 if coef > 0 else -1
            bound = region.b[i] / coef  # x >= bound (side 1) or x <= bound (side -1)
            prev = best.get((dim, side))
            if prev is None:
                best[(dim, side)] = i
                continue
            pdim = region.a[prev, int(np.nonzero(region.a[prev])[0][0])]
            pbound = region.b[prev] / pdim
            better = bound > pbound if side == 1 else bound < pbound
            if better:
                keep[prev] = False
                best[(dim, side)] = i
            else:
                keep[i] = False
    else:
        from .program import ProgramInstance
        from .simplex import solve_lp

        for r in range(m):
            others = keep.copy()
            others[r] = False
            if not np.any(others):
                continue
            prog = ProgramInstance(
                n=region.a.shape[1], quadratic=None, linear=region.a[r],
                a_eq=None, b_eq=[], a_in=region.a[others], b_in=region.b[others],
            )
            out = solve_lp(prog)
            if out.status == "infeasible":
                return region  # empty region: leave untouched
            if out.status == "optimal" and out.objective > region.b[r] + 1e-9:
                keep[r] = False

    if np.all(keep):
        return region
    return LeafRegion(
        leaf=region.leaf, path=region.path,
        a=region.a[keep], b=region.b[keep],
        strict_left=region.strict_left[keep],
        node_ids=[nid for nid, k in zip(region.node_ids, keep) if k],
        lower=region.lower, upper=region.upper,
    )


def target_leaves(tree: TreeModel, target: set[int] | list[int]) -> list[int]:
    """Leaves whose label is in the target set, ascending id order."""
    tset = set(int(y) for y in target)
    if not tset:
        raise EmptyTargetSet("target class set is empty")
    bad = [y for y in tset if not (1 <= y <= tree.classes)]
    if bad:
        raise EmptyTargetSet(f"classes {sorted(bad)} outside 1..{tree.classes}")
    return [i for i in tree.leaf_ids if tree.nodes[i].label in tset]


# ---------------------------------------------------------------------------
# document format
# ---------------------------------------------------------------------------
# {"kind": "axis_aligned"|"oblique", "classes": K, "root": id,
#  "nodes": [{"id", "type": "decision", "weights": [...], "bias", "left", "right"}
#            | {"id", "type": "decision", "feature": d, "threshold": t}   (axis only)
#            | {"id", "type": "leaf", "label": 1..K}],
#  "schema": inline schema document}

def parse_tree(doc: dict) -> TreeModel:
    if not isinstance(doc, dict):
        raise MalformedDocument("tree document must be an object")
    for key in ("kind", "classes", "root", "nodes", "schema"):
        if key not in doc:
            raise MalformedDocument(f"tree document missing {key!r}")
    schema = schema_from_document(doc["schema"])
    if schema.class_count != int(doc["classes"]):
        raise SchemaMismatch(
            f"tree declares {doc['classes']} classes, schema has {schema.class_count}")
    d = schema.encoded_dim
    nodes = []
    for nd in doc["nodes"]:
        if not isinstance(nd, dict) or "id" not in nd or "type" not in nd:
            raise MalformedDocument(f"bad node entry: {nd!r}")
        if nd["type"] == "leaf":
            nodes.append(LeafNode(id=int(nd["id"]), label=int(nd["label"])))
        elif nd["type"] == "decision":
            if "feature" in nd:
                if doc["kind"] != AXIS_ALIGNED:
                    raise MalformedDocument("feature/threshold form is axis_aligned only")
                dim = int(nd["feature"])
                if not (0 <= dim < d):
                    raise BadWeightDimension(f"node {nd['id']}: feature {dim} outside 0..{d - 1}")
                w = np.zeros(d)
                w[dim] = 1.0
                bias = -float(nd["threshold"])
            else:
                w = np.asarray(nd["weights"], dtype=float)
                bias = float(nd["bias"])
            nodes.append(DecisionNode(
                id=int(nd["id"]), weights=w, bias=bias,
                left=int(nd["left"]), right=int(nd["right"]),
            ))
        else:
            raise MalformedDocument(f"unknown node type {nd['type']!r}")
    return TreeModel(kind=doc["kind"], root=int(doc["root"]), nodes=nodes, schema=schema)


def serialize_tree(tree: TreeModel) -> dict:
    nodes = []
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if isinstance(node, LeafNode):
            nodes.append({"id": nid, "type": "leaf", "label": node.label})
        else:
            nodes.append({
                "id": nid, "type": "decision",
                "weights": [float(v) for v in node.weights],
                "bias": float(node.bias),
                "left": node.left, "right": node.right,
            })
    return {
        "kind": tree.kind,
        "classes": tree.classes,
        "root": tree.root,
        "nodes": nodes,
        "schema": schema_to_document(tree.schema),
    }
