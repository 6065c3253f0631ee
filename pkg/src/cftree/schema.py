"""Feature schema and the raw <-> encoded vector bijection.

A schema declares each original feature as continuous (with optional bounds)
or categorical (with C >= 2 named categories). Encoded vectors live in R^D
where D = (#continuous) + sum of category counts: continuous features occupy
one coordinate each, categorical features a contiguous one-hot block, all in
declaration order. Binary categoricals still get 2 dummy coordinates; the
uniform block structure keeps the integer encoder simple.

Categories are treated as unordered everywhere: the cost of a category switch
is whatever the chosen distance assigns to the dummy coordinates (under L1
with unit weights that is exactly 2, one dummy 0->1 plus one 1->0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    MalformedDocument,
    NonIntegralBlock,
    OutOfRangeValue,
    SchemaMismatch,
    UnknownCategory,
)

CONTINUOUS = "continuous"
CATEGORICAL = "categorical"

_MONOTONE_VALUES = (None, "nondecreasing", "nonincreasing")

# A raw instance is a plain dict {feature name: value}; continuous features
# carry numbers, categorical features carry a category name.
RawInstance = dict


@dataclass(frozen=True)
class FeatureDecl:
    """One original feature.

    kind is "continuous" (lower/upper bounds, possibly infinite) or
    "categorical" (categories list). monotone may only be declared on
    continuous features. immutable_by_default marks features the constraint
    compiler freezes unless told otherwise.
    """

    name: str
    kind: str
    lower: float = -math.inf
    upper: float = math.inf
    categories: tuple[str, ...] | None = None
    immutable_by_default: bool = False
    monotone: str | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, CATEGORICAL):
            raise MalformedDocument(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.monotone not in _MONOTONE_VALUES:
            raise MalformedDocument(f"feature {self.name!r}: bad monotone {self.monotone!r}")
        if self.kind == CONTINUOUS:
            if self.categories is not None:
                raise MalformedDocument(f"feature {self.name!r}: continuous with categories")
            if self.lower > self.upper:
                raise MalformedDocument(f"feature {self.name!r}: lower > upper")
        else:
            if self.monotone is not None:
                raise MalformedDocument(f"feature {self.name!r}: monotone on categorical")
            cats = self.categories
            if not cats or len(cats) < 2:
                raise MalformedDocument(f"feature {self.name!r}: needs >= 2 categories")
            if len(set(cats)) != len(cats):
                raise MalformedDocument(f"feature {self.name!r}: duplicate categories")
            object.__setattr__(self, "categories", tuple(cats))

    @property
    def width(self) -> int:
        """Number of encoded coordinates this feature occupies."""
        return 1 if self.kind == CONTINUOUS else len(self.categories)


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature declarations plus the class label space.

    Immutable after construction; shared freely across concurrent solves.
    Encoded coordinate ranges are contiguous per feature, in declaration
    order; offsets() gives each feature's starting coordinate.
    """

    features: tuple[FeatureDecl, ...]
    class_count: int
    class_names: tuple[str, ...] | None = None
    _offsets: tuple[int, ...] = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if not self.features:
            raise MalformedDocument("schema has no features")
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise MalformedDocument("duplicate feature names")
        if self.class_count < 1:
            raise MalformedDocument("class_count must be >= 1")
        if self.class_names is not None:
            if len(self.class_names) != self.class_count:
                raise MalformedDocument("class_names length != class_count")
            object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "features", tuple(self.features))
        offs, at = [], 0
        for f in self.features:
            offs.append(at)
            at += f.width
        object.__setattr__(self, "_offsets", tuple(offs))

    @property
    def encoded_dim(self) -> int:
        return self._offsets[-1] + self.features[-1].width

    def offsets(self) -> tuple[int, ...]:
        return self._offsets

    def feature(self, name: str) -> FeatureDecl:
        for f in self.features:
            if f.name == name:
                return f
        raise SchemaMismatch(f"unknown feature {name!r}")

    def span(self, name: str) -> tuple[int, int]:
        """Half-open coordinate range [start, stop) of a feature."""
        for f, off in zip(self.features, self._offsets):
            if f.name == name:
                return off, off + f.width
        raise SchemaMismatch(f"unknown feature {name!r}")

    def one_hot_blocks(self) -> list[tuple[int, int]]:
        """Coordinate ranges of all categorical blocks, in layout order."""
        return [
            (off, off + f.width)
            for f, off in zip(self.features, self._offsets)
            if f.kind == CATEGORICAL
        ]

    def class_label_name(self, label: int) -> str:
        if self.class_names is not None:
            return self.class_names[label - 1]
        return str(label)


# ---------------------------------------------------------------------------
# encode / decode
# ---------------------------------------------------------------------------

def encode(schema: FeatureSchema, raw: RawInstance) -> np.ndarray:
    """Map a raw instance to its encoded vector x in R^D.

    Continuous features are copied; each categorical feature becomes a
    C-length one-hot block summing to 1.

    Raises SchemaMismatch on missing/extra features, OutOfRangeValue on a
    continuous value outside its bounds, UnknownCategory on an undeclared
    category name.
    """
    declared = {f.name for f in schema.features}
    given = set(raw.keys())
    if given != declared:
        missing = sorted(declared - given)
        extra = sorted(given - declared)
        raise SchemaMismatch(f"instance features differ from schema (missing={missing}, extra={extra})")
    x = np.zeros(schema.encoded_dim)
    for f, off in zip(schema.features, schema.offsets()):
        v = raw[f.name]
        if f.kind == CONTINUOUS:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaMismatch(f"feature {f.name!r}: expected a number, got {type(v).__name__}")
            v = float(v)
            if not (f.lower <= v <= f.upper):
                raise OutOfRangeValue(f"feature {f.name!r}: {v} outside [{f.lower}, {f.upper}]")
            x[off] = v
        else:
            if v not in f.categories:
                raise UnknownCategory(f"feature {f.name!r}: unknown category {v!r}")
            x[off + f.categories.index(v)] = 1.0
    return x


def decode(schema: FeatureSchema, x: np.ndarray, tolerance: float = 1e-6) -> RawInstance:
    """Invert encode up to tolerance.

    Each one-hot block must have exactly one coordinate within tolerance of 1
    and the rest within tolerance of 0; otherwise NonIntegralBlock is raised
    (a fractional block means some relaxation leaked through). Continuous
    values pass through unchanged.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (schema.encoded_dim,):
        raise DimensionMismatch(f"expected dim {schema.encoded_dim}, got {x.shape}")
    raw: RawInstance = {}
    for f, off in zip(schema.features, schema.offsets()):
        if f.kind == CONTINUOUS:
            raw[f.name] = float(x[off])
            continue
        block = x[off:off + f.width]
        near_one = np.abs(block - 1.0) <= tolerance
        near_zero = np.abs(block) <= tolerance
        if near_one.sum() != 1 or not np.all(near_one | near_zero):
            raise NonIntegralBlock(f"feature {f.name!r}: block {block.tolist()} is not one-hot within {tolerance}")
        raw[f.name] = f.categories[int(np.argmax(near_one))]
    return raw


def validate_raw(schema: FeatureSchema, raw: RawInstance) -> None:
    """Raise the appropriate InputError if raw violates the schema."""
    encode(schema, raw)


# ---------------------------------------------------------------------------
# document format
# ---------------------------------------------------------------------------
# Schema file: {"features": [{name, kind, lower?, upper?, categories?,
# immutable_by_default?, monotone?}], "classes": [names]}

def schema_from_document(doc: dict) -> FeatureSchema:
    if not isinstance(doc, dict):
        raise MalformedDocument("schema document must be an object")
    feats_doc = doc.get("features")
    classes = doc.get("classes")
    if not isinstance(feats_doc, list) or not feats_doc:
        raise MalformedDocument("schema document needs a nonempty 'features' list")
    if not isinstance(classes, list) or not classes:
        raise MalformedDocument("schema document needs a nonempty 'classes' list")
    feats = []
    for fd in feats_doc:
        if not isinstance(fd, dict) or "name" not in fd or "kind" not in fd:
            raise MalformedDocument(f"bad feature entry: {fd!r}")
        known = {"name", "kind", "lower", "upper", "categories", "immutable_by_default", "monotone"}
        unknown = set(fd) - known
        if unknown:
            raise MalformedDocument(f"feature {fd.get('name')!r}: unknown fields {sorted(unknown)}")
        feats.append(FeatureDecl(
            name=fd["name"],
            kind=fd["kind"],
            lower=float(fd.get("lower", -math.inf)),
            upper=float(fd.get("upper", math.inf)),
            categories=tuple(fd["categories"]) if "categories" in fd else None,
            immutable_by_default=bool(fd.get("immutable_by_default", False)),
            monotone=fd.get("monotone"),
        ))
    return FeatureSchema(
        features=tuple(feats),
        class_count=len(classes),
        class_names=tuple(str(c) for c in classes),
    )


def schema_to_document(schema: FeatureSchema) -> dict:
    feats = []
    for f in schema.features:
        fd: dict = {"name": f.name, "kind": f.kind}
        if f.kind == CONTINUOUS:
            if math.isfinite(f.lower):
                fd["lower"] = f.lower
            if math.isfinite(f.upper):
                fd["upper"] = f.upper
        else:
            fd["categories"] = list(f.categories)
        if f.immutable_by_default:
            fd["immutable_by_default"] = True
        if f.monotone is not None:
            fd["monotone"] = f.monotone
        feats.append(fd)
    names = schema.class_names or tuple(str(i + 1) for i in range(schema.class_count))
    return {"features": feats, "classes": list(names)}
