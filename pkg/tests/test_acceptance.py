"""Release gates for the whole solving stack.

Every test pins a property the package promises: oracle agreement on random
trees, unconditional feasibility of found results, exactness of the
closed-form and mixed-integer paths against brute force, equivalence of the
extension modes, dominance over the dataset baseline, latency ceilings, and
certificate coverage for every solver path. The tolerances and case counts
are deliberate; a failure here means the property broke, not that the gate
needs loosening.
"""

import time

import numpy as np
import pytest

from cftree.constraints import TargetSpec, UserConstraints, compile_constraints
from cftree.cost import CostFunction, assemble_program
from cftree.engine import (
    Query,
    dataset_search,
    explain,
    explain_diverse,
    explain_margin,
)
from cftree.errors import GenerationFailed, OracleTooLarge
from cftree.fixtures import (
    gen_random_oblique,
    make_adult_like,
    make_blobs,
    train_axis_aligned,
)
from cftree.simplex import solve_lp
from cftree.mixed import solve_mixed
from cftree.oracles import enumerate_mixed_minimum, oracle_report
from cftree.program import (
    STATUS_INFEASIBLE,
    STATUS_OPTIMAL,
    ProgramInstance,
    check_kkt,
)
from cftree.qp import solve_qp
from cftree.separable import box_program, fold_to_box, median_clip, solve_separable
from cftree.tree import AXIS_ALIGNED, leaf_region, predict, target_leaves
from test_mixed import block_cs, load_pitfall
from test_qp import make_qp


def _query(tree, x, tgt, cost=None, **kw):
    d = tree.schema.encoded_dim
    return Query(tree=tree, x_bar=np.asarray(x, dtype=float),
                 target=TargetSpec.single(tgt),
                 cost=cost or CostFunction.l2(d),
                 user=kw.pop("user", UserConstraints()),
                 parallel=False, **kw)


def _random_tree_cases():
    """100 axis-aligned and 100 oblique seeded cases, d in 2..4, k in 2..3."""
    cases = []
    for i in range(100):
        d, k = (2, 3, 4)[i % 3], (2, 3)[i % 2]
        data = make_blobs(d=d, k=k, n_per_class=40, seed=i)
        tree = train_axis_aligned(data, max_depth=3 + i % 4)
        x = data.x[i % data.x.shape[0]]
        cases.append((tree, x, predict(tree, x) % k + 1, f"axis{i}"))
    rng = np.random.default_rng(99)
    for i in range(100):
        d, k = (2, 3, 4)[i % 3], (2, 3)[i % 2]
        try:
            tree = gen_random_oblique(d=d, depth=2 + i % 4, k=k, seed=1000 + i)
        except GenerationFailed:
            continue
        x = rng.normal(size=d)
        cases.append((tree, x, predict(tree, x) % k + 1, f"oblique{i}"))
    return cases


def test_objective_matches_oracles_on_random_trees():
    # engine vs brute-force oracles across 200 seeded trees; the comparison
    # allows the 1e-6 boundary-nudge headroom on top of the grid resolution
    t0 = time.perf_counter()
    found = 0
    for tree, x, tgt, tag in _random_tree_cases():
        q = _query(tree, x, tgt)
        r = explain(q)
        if r.status != "found":
            continue
        found += 1
        assert predict(tree, r.x) == tgt, tag

        best_grid, best_res, best_kkt = np.inf, np.nan, None
        for leaf in target_leaves(tree, [tgt]):
            cs = compile_constraints(tree.schema, q.x_bar, None,
                                     leaf_region(tree, leaf), 0.0)
            entry = next((e.objective for e in r.ledger
                          if e.leaf == leaf and e.objective is not None), None)
            cap = (entry if entry is not None else r.objective) + 1e-6
            rep = oracle_report(cs, q.cost, q.x_bar, "grid", objective_cap=cap)
            if rep.objective < best_grid:
                best_grid, best_res = rep.objective, rep.resolution
            try:
                rk = oracle_report(cs, q.cost, q.x_bar, "kkt_enumeration")
                best_kkt = rk.objective if best_kkt is None else min(best_kkt, rk.objective)
            except OracleTooLarge:
                pass
        assert abs(r.objective - best_grid) <= best_res + 1e-6, \
            (tag, r.objective, best_grid, best_res)
        if best_kkt is not None:
            assert abs(r.objective - best_kkt) <= 1e-6, (tag, r.objective, best_kkt)
    assert found >= 180
    assert time.perf_counter() - t0 < 300.0


def test_found_results_always_route_to_target():
    # 1000 queries against depth-4/5 oblique trees at d=50; every found
    # result must route to the target class under exact prediction
    rng = np.random.default_rng(7)
    found = 0
    for ti in range(50):
        k = (2, 3)[ti % 2]
        tree = gen_random_oblique(d=50, depth=4 + ti % 2, k=k, seed=3000 + ti)
        for _ in range(20):
            x = rng.normal(size=50)
            tgt = predict(tree, x) % k + 1
            r = explain(_query(tree, x, tgt))
            if r.status == "found":
                found += 1
                assert predict(tree, r.x) == tgt
    assert found == 1000


def test_median_formula_matches_scalar_qp():
    rng = np.random.default_rng(11)
    for i in range(10_000):
        x_bar = float(rng.normal(scale=3.0))
        lo = float(rng.normal(scale=2.0))
        hi = lo if i % 10 == 0 else lo + float(rng.uniform(0.0, 4.0))
        got = median_clip(x_bar, lo, hi)
        prog = make_qp(np.eye(1), [-2.0 * x_bar], const=x_bar * x_bar,
                       a_in=[[1.0], [-1.0]], b_in=[lo, -hi])
        out = solve_qp(prog)
        assert out.status == STATUS_OPTIMAL
        assert abs(got - float(out.x[0])) <= 1e-10


def test_weighted_distance_clip_is_optimal():
    # the clipped point stays optimal for every nonnegative (lam1, lam2)
    # weighting of |delta| and delta^2: 1000 boxes x 10 weight pairs, each
    # cross-checked against the iterative solver and the certificate checker
    rng = np.random.default_rng(202)
    for i in range(1000):
        n = 2 + i % 3
        x_bar = rng.normal(scale=2.0, size=n)
        lower = rng.normal(scale=1.5, size=n)
        upper = lower + rng.uniform(0.0, 3.0, size=n)
        lower[rng.random(n) < 0.2] = -np.inf
        upper[rng.random(n) < 0.2] = np.inf
        pin = (rng.random(n) < 0.15) & np.isfinite(lower) & np.isfinite(upper)
        upper[pin] = lower[pin]
        for j in range(10):
            lam1 = 0.0 if j == 0 else float(rng.uniform(0.1, 3.0))
            lam2 = 0.0 if j == 1 else float(rng.uniform(0.1, 3.0))
            cost = CostFunction.combination([
                (lam1, CostFunction.l1(n)),
                (lam2, CostFunction.l2(n)),
            ])
            out = solve_separable(x_bar, lower, upper, cost)
            assert out.status == STATUS_OPTIMAL
            assert np.array_equal(out.x[:n], np.clip(x_bar, lower, upper))
            prog = box_program(cost, x_bar, lower, upper)
            ref = solve_lp(prog) if prog.quadratic is None else solve_qp(prog)
            assert ref.status == STATUS_OPTIMAL
            assert abs(out.objective - ref.objective) <= 1e-8 * (1.0 + abs(out.objective))
            assert check_kkt(prog, out)["pass"] is True


def _mixed_case(seed):
    """Random one-hot problem with <= 16 categories and coupling rows."""
    rng = np.random.default_rng(seed)
    sizes = []
    while sum(sizes) < 4 or sum(sizes) > 16 or not sizes:
        nb = int(rng.integers(1, 4))
        sizes = [int(rng.integers(2, 7)) for _ in range(nb)]
        if sum(sizes) > 16:
            sizes = []
    blocks, start = [], 0
    for s in sizes:
        blocks.append((start, start + s))
        start += s
    ncont = int(rng.integers(0, 3))
    n = start + ncont

    x_bar = np.zeros(n)
    for bs, be in blocks:
        x_bar[bs + int(rng.integers(0, be - bs))] = 1.0
    x_bar[start:] = rng.normal(size=ncont)

    extra_a, extra_b = [], []
    if rng.random() < 0.5:
        # exclude the source category of the first block, forcing a switch
        src = int(np.argmax(x_bar[blocks[0][0]:blocks[0][1]])) + blocks[0][0]
        row = np.zeros(n)
        row[src] = -1.0
        extra_a.append(row)
        extra_b.append(0.0)
    if rng.random() < 0.5:
        row = rng.normal(size=n)
        extra_a.append(row)
        extra_b.append(float(row @ x_bar) - float(rng.uniform(0.0, 1.0)))

    kind = seed % 4
    if kind == 0:
        cost = CostFunction.l1(n, weights=rng.uniform(0.5, 2.0, size=n))
    elif kind == 1:
        cost = CostFunction.l2(n, weights=rng.uniform(0.5, 2.0, size=n))
    elif kind == 2:
        cost = CostFunction.combination([
            (1.0, CostFunction.l1(n)),
            (0.5, CostFunction.l2(n)),
        ])
    else:
        m = rng.normal(size=(n, n))
        cost = CostFunction.quadratic(m @ m.T + np.eye(n))
    cs = block_cs(n, tuple(blocks), extra_a or None, extra_b or None)
    return cs, cost, x_bar


def test_mixed_integer_matches_enumeration():
    for i in range(100):
        cs, cost, x_bar = _mixed_case(500 + i)
        prog = assemble_program(cost, x_bar, cs)
        out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
        ref_obj, _ = enumerate_mixed_minimum(cs, cost, x_bar)
        if out.status == STATUS_INFEASIBLE:
            assert np.isinf(ref_obj), i
        else:
            assert out.status == STATUS_OPTIMAL
            assert abs(out.objective - ref_obj) <= 1e-8, (i, out.objective, ref_obj)


def test_rounding_shortcut_fails_where_exact_search_succeeds():
    # frozen cases where rounding the relaxation is not just inexact but
    # wrong: one turns infeasible, one lands > 1e-6 above the optimum
    from cftree.mixed import relax_and_round

    prog, cs, expected = load_pitfall("rounding_infeasible.json")
    rounded = relax_and_round(prog, cs.integrality, cs.one_hot_blocks)
    assert rounded["relaxation_status"] == STATUS_OPTIMAL
    assert not rounded["feasible"]
    exact = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    assert exact.status == STATUS_OPTIMAL
    assert exact.objective == pytest.approx(expected["exact_objective"], abs=1e-9)

    prog, cs, expected = load_pitfall("rounding_suboptimal.json")
    rounded = relax_and_round(prog, cs.integrality, cs.one_hot_blocks)
    assert rounded["feasible"]
    exact = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    assert exact.status == STATUS_OPTIMAL
    assert rounded["objective"] - exact.objective > 1e-6


def _margin_fixture(i):
    k = (2, 3)[i % 4 // 2]
    if i % 2 == 0:
        d = (2, 3)[i // 2 % 2]
        data = make_blobs(d=d, k=k, n_per_class=30, seed=40 + i)
        tree = train_axis_aligned(data, max_depth=4)
        x = data.x[i % data.x.shape[0]]
    else:
        d = (2, 3, 4)[i % 3]
        tree = None
        for retry in range(5):
            try:
                tree = gen_random_oblique(d=d, depth=3, k=k, seed=7000 + i + 100 * retry)
                break
            except GenerationFailed:
                continue
        assert tree is not None
        x = np.random.default_rng(i).normal(size=d)
    return tree, x, predict(tree, x) % k + 1


def test_margin_schedules_never_get_cheaper():
    schedule = (0.0, 0.02, 0.05, 0.1, 0.25)
    checked = 0
    for i in range(100):
        tree, x, tgt = _margin_fixture(i)
        entries = explain_margin(_query(tree, x, tgt), schedule)
        assert [eps for eps, _ in entries] == list(schedule)
        objs = [r.objective for _, r in entries if r.status == "found"]
        statuses = [r.status for _, r in entries]
        # regions only shrink as the margin grows
        for a, b in zip(objs, objs[1:]):
            assert b >= a - 1e-9
        first_missing = next((j for j, s in enumerate(statuses) if s != "found"),
                             len(statuses))
        assert all(s != "found" for s in statuses[first_missing:])
        checked += len(objs) > 1
    assert checked >= 60


def _leaf_minimum(tree, x, leaf, cost):
    """Per-leaf optimum via the iterative solvers, bypassing engine dispatch."""
    cs = compile_constraints(tree.schema, x, None, leaf_region(tree, leaf), 0.0)
    prog = assemble_program(cost, x, cs)
    if cs.integrality:
        out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
    elif prog.quadratic is None:
        out = solve_lp(prog)
    else:
        out = solve_qp(prog)
    return out.objective if out.status == STATUS_OPTIMAL else np.inf


def test_extension_modes_agree_with_brute_force():
    rng = np.random.default_rng(61)
    for i in range(20):
        k = 3
        data = make_blobs(d=3, k=k, n_per_class=30, seed=70 + i)
        tree = train_axis_aligned(data, max_depth=3 + i % 3)
        x = data.x[2 * i]
        src = predict(tree, x)
        others = [y for y in range(1, k + 1) if y != src]

        # diverse list: sorted by objective, first entry equals the winner
        q = _query(tree, x, others[0])
        results = explain_diverse(q, 4)
        winner = explain(q)
        if winner.status == "found":
            assert results and results[0].status == "found"
            assert results[0].objective == winner.objective
            assert np.array_equal(results[0].x, winner.x)
            objs = [r.objective for r in results if r.status == "found"]
            assert objs == sorted(objs)

        # subset target equals the best single-target run
        sub = explain(Query(tree=tree, x_bar=x, target=TargetSpec.subset(others),
                            cost=q.cost, user=UserConstraints(), parallel=False))
        singles = [explain(_query(tree, x, y)) for y in others]
        single_objs = [r.objective for r in singles if r.status == "found"]
        if sub.status == "found":
            assert sub.objective == pytest.approx(min(single_objs), abs=1e-12)
        else:
            assert not single_objs

        # class-cost mode equals brute force over (leaf, class price)
        prices = rng.uniform(0.0, 4.0, size=k)
        cc = explain(Query(tree=tree, x_bar=x,
                           target=TargetSpec.class_cost(prices),
                           cost=q.cost, user=UserConstraints(), parallel=False))
        best = np.inf
        for leaf in tree.leaf_ids:
            label = tree.leaf_label(leaf)
            best = min(best, _leaf_minimum(tree, x, leaf, q.cost)
                       + prices[label - 1])
        assert cc.status == "found"
        # boundary nudges may pay up to ~1e-6 over the closed-region optimum
        got = cc.objective + prices[predict(tree, cc.x) - 1]
        assert got == pytest.approx(best, abs=1e-6)


def test_engine_never_loses_to_dataset_baseline():
    both = 0
    for i in range(100):
        d, k = (2, 3, 4)[i % 3], (2, 3)[i % 2]
        data = make_blobs(d=d, k=k, n_per_class=40, seed=900 + i)
        if i % 2 == 0:
            tree = train_axis_aligned(data, max_depth=4)
        else:
            try:
                tree = gen_random_oblique(d=d, depth=3, k=k, seed=900 + i)
            except GenerationFailed:
                continue
        x = data.x[i % data.x.shape[0]]
        tgt = predict(tree, x) % k + 1
        q = _query(tree, x, tgt)
        r = explain(q)
        base = dataset_search(q, data)
        if r.status == "found" and base.status == "found":
            both += 1
            assert r.objective <= base.objective + 1e-9
    assert both >= 80


def test_latency_oblique_and_axis_paths():
    # oblique: d=784, depth 6 (64 leaves), 10 classes, unit l2, serial
    tree = gen_random_oblique(d=784, depth=6, k=10, seed=11)
    rng = np.random.default_rng(5)
    xs = rng.normal(size=(15, 784))
    explain(_query(tree, xs[0], predict(tree, xs[0]) % 10 + 1))  # warm caches
    times = []
    for x in xs:
        tgt = predict(tree, x) % 10 + 1
        t0 = time.perf_counter()
        r = explain(_query(tree, x, tgt))
        times.append(time.perf_counter() - t0)
        assert r.status == "found"
    assert float(np.median(times)) <= 0.050

    # axis-aligned separable: same width, l1 cost
    data = make_blobs(d=784, k=3, n_per_class=30, seed=3)
    atree = train_axis_aligned(data, max_depth=8)
    cost = CostFunction.l1(784)
    x = data.x[0]
    tgt = predict(atree, x) % 3 + 1
    explain(_query(atree, x, tgt, cost=cost))
    times = []
    for _ in range(41):
        t0 = time.perf_counter()
        r = explain(_query(atree, x, tgt, cost=cost))
        times.append(time.perf_counter() - t0)
    assert r.status == "found"
    assert float(np.median(times)) <= 0.001


def _pinned_program(prog, out, integrality):
    """The block-pinned program a mixed outcome's certificate refers to."""
    pins = sorted(int(c) for c in integrality)
    rows = np.zeros((len(pins), prog.n))
    rhs = np.zeros(len(pins))
    for i, c in enumerate(pins):
        rows[i, c] = 1.0
        rhs[i] = float(out.x[c])
    a_eq = np.vstack([prog.a_eq, rows]) if prog.a_eq.shape[0] else rows
    b_eq = np.concatenate([prog.b_eq, rhs])
    return ProgramInstance(n=prog.n, quadratic=prog.quadratic, linear=prog.linear,
                           a_eq=a_eq, b_eq=b_eq, a_in=prog.a_in, b_in=prog.b_in,
                           constant=prog.constant)


def test_every_optimal_outcome_certifies():
    # every solver path must emit duals that the independent checker accepts
    # at 1e-8: closed-form box, qp, lp, and branch-and-bound outcomes
    counts = {"separable": 0, "qp": 0, "lp": 0, "mixed": 0}

    def check(prog, out, path):
        if out.status != STATUS_OPTIMAL:
            return
        report = check_kkt(prog, out)
        assert report["pass"] is True, (path, report)
        counts[path] += 1

    for i in range(12):
        d, k = (2, 3, 4)[i % 3], (2, 3)[i % 2]
        data = make_blobs(d=d, k=k, n_per_class=30, seed=200 + i)
        tree = train_axis_aligned(data, max_depth=4)
        x = data.x[i]
        tgt = predict(tree, x) % k + 1
        for cost in (CostFunction.l2(d), CostFunction.l1(d),
                     CostFunction.combination([(1.0, CostFunction.l1(d)),
                                               (0.5, CostFunction.l2(d))])):
            for leaf in target_leaves(tree, [tgt]):
                cs = compile_constraints(tree.schema, x, None,
                                         leaf_region(tree, leaf), 0.0)
                lower, upper = fold_to_box(cs)
                out = solve_separable(x, lower, upper, cost, cs.one_hot_blocks)
                if out.status == STATUS_OPTIMAL:
                    prog = box_program(cost, x, lower, upper,
                                       cs.one_hot_blocks, x=out.x)
                    check(prog, out, "separable")

    rng = np.random.default_rng(31)
    for i in range(15):
        d, k = (3, 4, 6)[i % 3], (2, 3)[i % 2]
        tree = gen_random_oblique(d=d, depth=3, k=k, seed=400 + i)
        x = rng.normal(size=d)
        tgt = predict(tree, x) % k + 1
        for cost in (CostFunction.l2(d), CostFunction.l1(d)):
            for leaf in target_leaves(tree, [tgt]):
                cs = compile_constraints(tree.schema, x, None,
                                         leaf_region(tree, leaf), 0.0)
                prog = assemble_program(cost, x, cs)
                if prog.quadratic is None:
                    check(prog, solve_lp(prog), "lp")
                else:
                    check(prog, solve_qp(prog), "qp")

    for i in range(30):
        cs, cost, x_bar = _mixed_case(500 + i)
        prog = assemble_program(cost, x_bar, cs)
        out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
        if out.status == STATUS_OPTIMAL:
            check(_pinned_program(prog, out, cs.integrality), out, "mixed")

    # mixed-schema tree end to end: categorical blocks under a coupled cost
    data = make_adult_like(3)
    tree = train_axis_aligned(data, max_depth=4)
    n = tree.schema.encoded_dim
    rng = np.random.default_rng(8)
    m = rng.normal(size=(n, n))
    cost = CostFunction.quadratic(m @ m.T + np.eye(n))
    x = data.x[0]
    tgt = predict(tree, x) % tree.schema.class_count + 1
    for leaf in target_leaves(tree, [tgt]):
        cs = compile_constraints(tree.schema, x, None, leaf_region(tree, leaf), 0.0)
        prog = assemble_program(cost, x, cs)
        out = solve_mixed(prog, cs.integrality, cs.one_hot_blocks)
        if out.status == STATUS_OPTIMAL:
            check(_pinned_program(prog, out, cs.integrality), out, "mixed")

    assert all(c > 0 for c in counts.values()), counts
    assert sum(counts.values()) >= 150
