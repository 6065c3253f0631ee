"""Shared builders for the test suite."""

import numpy as np
import pytest

from cftree.schema import CATEGORICAL, CONTINUOUS, FeatureDecl, FeatureSchema
from cftree.tree import AXIS_ALIGNED, OBLIQUE, DecisionNode, LeafNode, TreeModel


@pytest.fixture
def plain_schema():
    """Three unbounded continuous features, two classes."""
    return FeatureSchema(
        features=(
            FeatureDecl(name="f0", kind=CONTINUOUS),
            FeatureDecl(name="f1", kind=CONTINUOUS),
            FeatureDecl(name="f2", kind=CONTINUOUS),
        ),
        class_count=2,
    )


@pytest.fixture
def mixed_schema():
    """One bounded continuous + one categorical + one immutable feature."""
    return FeatureSchema(
        features=(
            FeatureDecl(name="age", kind=CONTINUOUS, lower=18.0, upper=90.0,
                        monotone="nondecreasing"),
            FeatureDecl(name="color", kind=CATEGORICAL,
                        categories=("red", "green", "blue")),
            FeatureDecl(name="origin", kind=CONTINUOUS, immutable_by_default=True),
        ),
        class_count=3,
        class_names=("deny", "review", "grant"),
    )


def axis_stump(schema, feature_idx=0, threshold=0.0, left_label=1, right_label=2):
    """Single-split axis tree: feature >= threshold routes right."""
    d = schema.encoded_dim
    w = np.zeros(d)
    w[feature_idx] = 1.0
    nodes = [
        DecisionNode(id=1, weights=w, bias=-threshold, left=2, right=3),
        LeafNode(id=2, label=left_label),
        LeafNode(id=3, label=right_label),
    ]
    return TreeModel(kind=AXIS_ALIGNED, root=1, nodes=nodes, schema=schema)


def oblique_two_level(schema, seed=0):
    """Depth-2 complete oblique tree with unit-norm random hyperplanes."""
    rng = np.random.default_rng(seed)
    d = schema.encoded_dim

    def plane():
        w = rng.normal(size=d)
        return w / np.linalg.norm(w), float(rng.uniform(-0.5, 0.5))

    w1, b1 = plane()
    w2, b2 = plane()
    w3, b3 = plane()
    nodes = [
        DecisionNode(id=1, weights=w1, bias=b1, left=2, right=3),
        DecisionNode(id=2, weights=w2, bias=b2, left=4, right=5),
        DecisionNode(id=3, weights=w3, bias=b3, left=6, right=7),
        LeafNode(id=4, label=1),
        LeafNode(id=5, label=2),
        LeafNode(id=6, label=2),
        LeafNode(id=7, label=1),
    ]
    return TreeModel(kind=OBLIQUE, root=1, nodes=nodes, schema=schema)
