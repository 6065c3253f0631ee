import json
import os

import numpy as np
import pytest

from cftree.constraints import ConstraintSet
from cftree.cost import CostFunction, assemble_program
from cftree.mixed import relax_and_round, solve_mixed
from cftree.oracles import enumerate_mixed_minimum
from cftree.program import STATUS_INFEASIBLE, STATUS_OPTIMAL

DATA = os.path.join(os.path.dirname(__file__), "data")


def block_cs(n, blocks, extra_a=None, extra_b=None):
    """ConstraintSet with one-hot structure and optional extra rows."""
    rows_a, rows_b = [], []
    a_eq, b_eq = [], []
    integrality = []
    for start, stop in blocks:
        for c in range(start, stop):
            e = np.zeros(n)
            e[c] = 1.0
            rows_a.append(e.copy())
            rows_b.append(0.0)
            rows_a.append(-e)
            rows_b.append(-1.0)
            integrality.append(c)
        row = np.zeros(n)
        row[start:stop] = 1.0
        a_eq.append(row)
        b_eq.append(1.0)
    if extra_a is not None:
        rows_a.extend(np.asarray(extra_a, dtype=float))
        rows_b.extend(extra_b)
    return ConstraintSet(
        n=n,
        a_eq=np.asarray(a_eq), b_eq=np.asarray(b_eq),
        a_in=np.asarray(rows_a), b_in=np.asarray(rows_b, dtype=float),
        integrality=tuple(integrality),
        one_hot_blocks=tuple(blocks),
    )


def test_two_blocks_match_enumeration():
    # mid-sized case: C=3 and C=4 blocks, random PSD coupling, 12 assignments
    rng = np.random.default_rng(4)
    n = 7
    blocks = ((0, 3), (3, 7))
    m = rng.normal(size=(n, n))
    cost = CostFunction.quadratic(m @ m.T + np.eye(n))
    x_bar = np.zeros(n)
    x_bar[0] = 1.0
    x_bar[3] = 1.0
    cs = block_cs(n, blocks)
    prog = assemble_program(cost, x_bar, cs)
    out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    assert out.status == STATUS_OPTIMAL
    ref_obj, _ = enumerate_mixed_minimum(cs, cost, x_bar)
    assert out.objective == pytest.approx(ref_obj, abs=1e-8)
    # the winner is integral on every block coordinate
    for c in cs.integrality:
        assert min(abs(out.x[c]), abs(out.x[c] - 1.0)) < 1e-7


def test_continuous_coordinates_ride_along():
    rng = np.random.default_rng(8)
    n = 5  # coords 0-1 continuous, block on 2-4
    blocks = ((2, 5),)
    cost = CostFunction.l2(n, weights=rng.uniform(0.5, 2.0, size=n))
    x_bar = np.array([0.3, -0.7, 0.0, 1.0, 0.0])
    a_extra = [[1.0, 1.0, 0.0, 0.0, 0.0]]
    b_extra = [1.0]
    cs = block_cs(n, blocks, a_extra, b_extra)
    prog = assemble_program(cost, x_bar, cs)
    out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    assert out.status == STATUS_OPTIMAL
    ref_obj, _ = enumerate_mixed_minimum(cs, cost, x_bar)
    assert out.objective == pytest.approx(ref_obj, abs=1e-8)
    assert out.x[0] + out.x[1] >= 1.0 - 1e-8


def test_mixed_infeasible_when_rows_conflict():
    n = 3
    blocks = ((0, 3),)
    # force coordinate 0 above 2, impossible inside a one-hot block
    cs = block_cs(n, blocks, [[1.0, 0.0, 0.0]], [2.0])
    cost = CostFunction.l2(n)
    prog = assemble_program(cost, np.array([1.0, 0.0, 0.0]), cs)
    out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    assert out.status == STATUS_INFEASIBLE


def test_random_sweep_matches_enumeration():
    rng = np.random.default_rng(15)
    agreements = 0
    for trial in range(30):
        c1 = int(rng.integers(2, 5))
        c2 = int(rng.integers(2, 5))
        n = c1 + c2 + 1  # one free continuous coordinate at the end
        blocks = ((0, c1), (c1, c1 + c2))
        m = rng.normal(size=(n, n)) * 0.4
        cost = CostFunction.quadratic(m @ m.T + np.eye(n))
        x_bar = np.zeros(n)
        x_bar[int(rng.integers(0, c1))] = 1.0
        x_bar[c1 + int(rng.integers(0, c2))] = 1.0
        x_bar[-1] = float(rng.normal())
        cs = block_cs(n, blocks)
        prog = assemble_program(cost, x_bar, cs)
        out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
        assert out.status == STATUS_OPTIMAL
        ref_obj, _ = enumerate_mixed_minimum(cs, cost, x_bar)
        assert out.objective == pytest.approx(ref_obj, abs=1e-8), trial
        agreements += 1
    assert agreements == 30


def load_pitfall(name):
    with open(os.path.join(DATA, name)) as fh:
        doc = json.load(fh)
    from cftree.constraints import compile_constraints
    from cftree.cost import cost_from_document
    from cftree.tree import leaf_region, parse_tree
    tree = parse_tree(doc["tree"])
    x_bar = np.asarray(doc["instance"], dtype=float)
    cost = cost_from_document(doc["cost"], tree.schema.encoded_dim)
    cs = compile_constraints(tree.schema, x_bar, None,
                             leaf_region(tree, doc["leaf"]), 0.0)
    prog = assemble_program(cost, x_bar, cs)
    return prog, cs, doc["expected"]


def test_frozen_fixture_rounding_goes_infeasible():
    prog, cs, expected = load_pitfall("rounding_infeasible.json")
    rounded = relax_and_round(prog, cs.integrality, cs.one_hot_blocks)
    assert rounded["relaxation_status"] == STATUS_OPTIMAL
    assert not rounded["feasible"]
    exact = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    assert exact.status == STATUS_OPTIMAL
    assert exact.objective == pytest.approx(expected["exact_objective"], abs=1e-9)


def test_frozen_fixture_rounding_is_suboptimal():
    prog, cs, expected = load_pitfall("rounding_suboptimal.json")
    rounded = relax_and_round(prog, cs.integrality, cs.one_hot_blocks)
    assert rounded["feasible"]
    exact = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    assert exact.status == STATUS_OPTIMAL
    assert rounded["objective"] - exact.objective > 1e-6
    assert rounded["objective"] == pytest.approx(expected["rounded_objective"], abs=1e-9)
    assert exact.objective == pytest.approx(expected["exact_objective"], abs=1e-9)
