import numpy as np
import pytest

from cftree.errors import GenerationFailed, MalformedDocument
from cftree.fixtures import (
    adult_like_schema,
    dataset_from_document,
    dataset_to_document,
    gen_random_oblique,
    load_dataset,
    make_adult_like,
    make_blobs,
    save_dataset,
    train_axis_aligned,
    training_error,
)
from cftree.tree import AXIS_ALIGNED, OBLIQUE, DecisionNode, LeafNode, predict


def test_blobs_shape_and_determinism():
    data = make_blobs(d=2, k=3, n_per_class=50, seed=11)
    assert data.x.shape == (150, 2)
    assert sorted(set(data.labels.tolist())) == [1, 2, 3]
    assert data.schema.class_count == 3
    again = make_blobs(d=2, k=3, n_per_class=50, seed=11)
    assert np.array_equal(data.x, again.x)
    assert np.array_equal(data.labels, again.labels)
    # frozen draw, guards the rng call order
    assert data.x[0, 0] == pytest.approx(0.7064974265846968, abs=0.0)


def test_trainer_separates_blobs():
    data = make_blobs(d=2, k=3, n_per_class=50, seed=11)
    tree = train_axis_aligned(data, max_depth=4)
    assert tree.kind == AXIS_ALIGNED
    assert tree.classes == 3
    assert training_error(tree, data) == 0.0
    for i in range(data.x.shape[0]):
        assert predict(tree, data.x[i]) == int(data.labels[i])


def test_trainer_on_tabular_data():
    data = make_adult_like(seed=3)
    shallow = train_axis_aligned(data, max_depth=1)
    deep = train_axis_aligned(data, max_depth=4)
    err_shallow = training_error(shallow, data)
    err_deep = training_error(deep, data)
    assert err_deep <= err_shallow
    assert err_deep == pytest.approx(0.1675, abs=0.0)


def test_oblique_generator_structure():
    tree = gen_random_oblique(d=2, depth=2, k=2, seed=7)
    assert tree.kind == OBLIQUE
    decisions = [n for n in tree.nodes.values() if isinstance(n, DecisionNode)]
    leaves = sorted((n for n in tree.nodes.values() if isinstance(n, LeafNode)),
                    key=lambda n: n.id)
    assert len(decisions) == 3
    assert len(leaves) == 4
    assert [n.label for n in leaves] == [1, 2, 1, 2]
    for n in decisions:
        assert np.linalg.norm(n.weights) == pytest.approx(1.0, abs=1e-12)


def test_oblique_generator_deterministic():
    a = gen_random_oblique(d=3, depth=3, k=3, seed=42)
    b = gen_random_oblique(d=3, depth=3, k=3, seed=42)
    assert a.nodes.keys() == b.nodes.keys()
    for nid, node in a.nodes.items():
        other = b.nodes[nid]
        if isinstance(node, DecisionNode):
            assert np.array_equal(node.weights, other.weights)
            assert node.bias == other.bias
        else:
            assert node.label == other.label


def test_oblique_generator_covers_every_class():
    tree = gen_random_oblique(d=3, depth=3, k=5, seed=2)
    labels = {n.label for n in tree.nodes.values() if isinstance(n, LeafNode)}
    assert labels == {1, 2, 3, 4, 5}


def test_oblique_generator_rejects_bad_arguments():
    with pytest.raises(GenerationFailed):
        gen_random_oblique(d=2, depth=0, k=2, seed=0)
    with pytest.raises(GenerationFailed):
        gen_random_oblique(d=2, depth=2, k=1, seed=0)


def test_adult_like_shape():
    schema = adult_like_schema()
    data = make_adult_like(seed=3)
    assert data.x.shape == (400, schema.encoded_dim)
    assert data.x.shape[1] == 13
    assert sorted(set(data.labels.tolist())) == [1, 2]
    again = make_adult_like(seed=3)
    assert np.array_equal(data.x, again.x)
    # one-hot blocks decode to exactly one active category
    for start, stop in schema.one_hot_blocks():
        block = data.x[:, start:stop]
        assert np.all(np.isin(block, (0.0, 1.0)))
        assert np.all(block.sum(axis=1) == 1.0)


def test_dataset_document_roundtrip(tmp_path):
    data = make_adult_like(seed=5, n=40)
    doc = dataset_to_document(data)
    back = dataset_from_document(doc)
    assert np.allclose(back.x, data.x)
    assert np.array_equal(back.labels, data.labels)
    assert back.seed == 5

    path = tmp_path / "dataset.json"
    save_dataset(data, str(path))
    loaded = load_dataset(str(path))
    assert np.allclose(loaded.x, data.x)
    assert np.array_equal(loaded.labels, data.labels)


def test_dataset_document_rejects_missing_fields():
    with pytest.raises(MalformedDocument):
        dataset_from_document({"rows": []})
    data = make_adult_like(seed=5, n=4)
    doc = dataset_to_document(data)
    doc["labels"] = doc["labels"][:-1]
    with pytest.raises(MalformedDocument):
        dataset_from_document(doc)
