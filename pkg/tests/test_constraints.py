import numpy as np
import pytest

from cftree.constraints import (
    TargetSpec, UserConstraints, check_feasible_point, compile_constraints,
    target_from_document, user_constraints_from_document,
    user_constraints_to_document,
)
from cftree.errors import (
    ContradictoryConstraints, InvalidEpsilon, InvalidTarget,
    MalformedDocument, SchemaMismatch,
)
from cftree.schema import encode
from cftree.tree import leaf_region
from conftest import axis_stump


def compile_plain(schema, x_bar, user=None, region=None, epsilon=0.0):
    return compile_constraints(schema, x_bar, user, region, epsilon)


def test_region_rows_come_first_with_epsilon(plain_schema):
    tree = axis_stump(plain_schema, feature_idx=0, threshold=1.0)
    region = leaf_region(tree, 3)
    cs = compile_plain(plain_schema, np.zeros(3), region=region, epsilon=0.25)
    assert cs.n_region_rows == 1
    np.testing.assert_allclose(cs.a_in[0], [1.0, 0.0, 0.0])
    assert cs.b_in[0] == pytest.approx(1.25)  # threshold shifted by epsilon
    assert cs.region_strict.tolist() == [False]


def test_epsilon_validation(plain_schema):
    with pytest.raises(InvalidEpsilon):
        compile_plain(plain_schema, np.zeros(3), epsilon=-0.1)
    with pytest.raises(InvalidEpsilon):
        compile_plain(plain_schema, np.zeros(3), epsilon=float("nan"))


def test_schema_bounds_become_rows(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "red", "origin": 1.0})
    cs = compile_plain(mixed_schema, x)
    # age has both bounds; origin is frozen by default so it contributes an
    # equality, and the color block contributes one-hot rows
    lb_rows = [i for i in range(cs.a_in.shape[0])
               if cs.a_in[i, 0] == 1.0 and cs.b_in[i] == 18.0]
    ub_rows = [i for i in range(cs.a_in.shape[0])
               if cs.a_in[i, 0] == -1.0 and cs.b_in[i] == -90.0]
    assert lb_rows and ub_rows


def test_monotone_from_schema_and_user_conflict(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "red", "origin": 1.0})
    # schema declares age nondecreasing; user flipping it is contradictory
    with pytest.raises(ContradictoryConstraints):
        compile_plain(mixed_schema, x,
                      UserConstraints(monotone={"age": "nonincreasing"}))


def test_monotone_row_direction(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "red", "origin": 1.0})
    cs = compile_plain(mixed_schema, x)
    rows = [i for i in range(cs.a_in.shape[0])
            if cs.a_in[i, 0] == 1.0 and cs.b_in[i] == pytest.approx(40.0)]
    assert rows, "nondecreasing age must add x_age >= x_bar_age"


def test_user_bounds_empty_interval(plain_schema):
    with pytest.raises(ContradictoryConstraints):
        compile_plain(plain_schema, np.zeros(3),
                      UserConstraints(bounds={"f1": (2.0, 1.0)}))


def test_user_bounds_vs_schema_interval(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "red", "origin": 1.0})
    with pytest.raises(ContradictoryConstraints):
        compile_plain(mixed_schema, x,
                      UserConstraints(bounds={"age": (100.0, None)}))


def test_max_delta_rows_and_negative_cap(plain_schema):
    x = np.array([1.0, 2.0, 3.0])
    cs = compile_plain(plain_schema, x, UserConstraints(max_delta={"f2": 0.5}))
    got = {(tuple(cs.a_in[i]), round(float(cs.b_in[i]), 9))
           for i in range(cs.a_in.shape[0])}
    assert ((0.0, 0.0, 1.0), 2.5) in got
    assert ((0.0, 0.0, -1.0), -3.5) in got
    with pytest.raises(ContradictoryConstraints):
        compile_plain(plain_schema, x, UserConstraints(max_delta={"f2": -1.0}))


def test_freeze_becomes_equality(plain_schema):
    x = np.array([1.0, 2.0, 3.0])
    cs = compile_plain(plain_schema, x, UserConstraints(freeze=("f1",)))
    assert cs.a_eq.shape[0] == 1
    np.testing.assert_allclose(cs.a_eq[0], [0.0, 1.0, 0.0])
    assert cs.b_eq[0] == pytest.approx(2.0)


def test_freeze_outside_bounds_contradicts(plain_schema):
    x = np.array([1.0, 5.0, 0.0])
    with pytest.raises(ContradictoryConstraints):
        compile_plain(plain_schema, x,
                      UserConstraints(freeze=("f1",),
                                      bounds={"f1": (None, 4.0)}))


def test_categorical_block_rows(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "green", "origin": 1.0})
    cs = compile_plain(mixed_schema, x)
    assert cs.one_hot_blocks == ((1, 4),)
    assert cs.integrality == (1, 2, 3)
    # block sum equality present
    sums = [i for i in range(cs.a_eq.shape[0])
            if np.allclose(cs.a_eq[i], [0, 1, 1, 1, 0]) and cs.b_eq[i] == 1.0]
    assert sums


def test_frozen_categorical_block_is_pinned(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "green", "origin": 1.0})
    cs = compile_plain(mixed_schema, x, UserConstraints(freeze=("color",)))
    assert cs.one_hot_blocks == ()
    assert cs.integrality == ()
    # three pin equalities for the dummies
    assert cs.a_eq.shape[0] == 3 + 1  # color pins + origin default freeze


def test_bounds_on_categorical_rejected(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "red", "origin": 1.0})
    with pytest.raises(SchemaMismatch):
        compile_plain(mixed_schema, x, UserConstraints(bounds={"color": (0, 1)}))


def test_unknown_feature_rejected(plain_schema):
    with pytest.raises(SchemaMismatch):
        compile_plain(plain_schema, np.zeros(3), UserConstraints(freeze=("zz",)))


def test_compile_is_deterministic(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "red", "origin": 1.0})
    user = UserConstraints(bounds={"age": (20.0, 80.0)}, max_delta={"age": 30.0})
    a = compile_plain(mixed_schema, x, user)
    b = compile_plain(mixed_schema, x, user)
    np.testing.assert_array_equal(a.a_in, b.a_in)
    np.testing.assert_array_equal(a.b_in, b.b_in)
    np.testing.assert_array_equal(a.a_eq, b.a_eq)


def test_schema_table_cache_handles_equal_but_distinct_schemas(plain_schema):
    import copy
    other = copy.deepcopy(plain_schema)
    a = compile_plain(plain_schema, np.zeros(3))
    b = compile_plain(other, np.zeros(3))
    np.testing.assert_array_equal(a.a_in, b.a_in)
    np.testing.assert_array_equal(a.b_in, b.b_in)


def test_with_strict_margin_scopes(plain_schema):
    tree = axis_stump(plain_schema, feature_idx=0, threshold=1.0)
    weak = leaf_region(tree, 3)     # right branch: weak row
    strict = leaf_region(tree, 2)   # left branch: strict row
    cs_w = compile_plain(plain_schema, np.zeros(3), region=weak)
    cs_s = compile_plain(plain_schema, np.zeros(3), region=strict)
    m = 1e-6
    assert cs_w.with_strict_margin(m).b_in[0] == pytest.approx(cs_w.b_in[0])
    assert cs_w.with_strict_margin(m, include_weak=True).b_in[0] == \
        pytest.approx(cs_w.b_in[0] + m)
    assert cs_s.with_strict_margin(m).b_in[0] == pytest.approx(cs_s.b_in[0] + m)


def test_check_feasible_point(mixed_schema):
    x = encode(mixed_schema, {"age": 40.0, "color": "red", "origin": 1.0})
    cs = compile_plain(mixed_schema, x)
    assert check_feasible_point(cs, x)
    y = x.copy()
    y[0] = 10.0  # below the age lower bound
    assert not check_feasible_point(cs, y)
    z = x.copy()
    z[1:4] = [0.4, 0.6, 0.0]  # fuzzy block
    assert not check_feasible_point(cs, z)


def test_target_documents():
    t = target_from_document(2)
    assert t.target_classes(3, source_label=1) == [2]
    t = target_from_document({"class": 3})
    assert t.target_classes(3, source_label=1) == [3]
    t = target_from_document({"classes": [2, 3]})
    assert t.target_classes(3, source_label=1) == [2, 3]
    t = target_from_document({"class_costs": [0.0, 0.5, 1.5]})
    assert t.target_classes(3, source_label=1) == [1, 2, 3]
    assert t.leaf_price(3) == pytest.approx(1.5)


def test_target_subset_excludes_source():
    t = target_from_document({"classes": [1, 2]})
    assert t.target_classes(3, source_label=1) == [2]
    t = target_from_document({"classes": [1, 2], "allow_same_class": True})
    assert t.target_classes(3, source_label=1) == [1, 2]


def test_target_same_class_flag():
    with pytest.raises(InvalidTarget):
        target_from_document(1).target_classes(2, source_label=1)
    with pytest.raises(InvalidTarget):
        target_from_document({"classes": [1]}).target_classes(2, source_label=1)
    t = target_from_document({"class": 1, "allow_same_class": True})
    assert t.target_classes(2, source_label=1) == [1]


def test_target_out_of_range():
    with pytest.raises(InvalidTarget):
        target_from_document(9).target_classes(3, source_label=1)


def test_user_constraints_document_roundtrip():
    user = UserConstraints(freeze=("a",), bounds={"b": (0.0, 1.0)},
                           monotone={"c": "nondecreasing"},
                           max_delta={"d": 2.0}, epsilon=0.5)
    doc = user_constraints_to_document(user)
    again = user_constraints_from_document(doc)
    assert user_constraints_to_document(again) == doc


def test_user_constraints_unknown_key_rejected():
    with pytest.raises(MalformedDocument):
        user_constraints_from_document({"freeze": [], "wiggle": 1})
