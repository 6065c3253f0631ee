import numpy as np
import pytest

from cftree.constraints import ConstraintSet
from cftree.cost import CostFunction, assemble_program
from cftree.oracles import oracle_report
from cftree.program import (
    STATUS_INFEASIBLE, STATUS_OPTIMAL, STATUS_UNBOUNDED, ProgramInstance,
    check_kkt,
)
from cftree.qp import solve_qp


def make_qp(q, c, a_in=None, b_in=None, a_eq=None, b_eq=None, const=0.0):
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    return ProgramInstance(
        n=n,
        quadratic=q,
        linear=np.asarray(c, dtype=float),
        constant=const,
        a_in=np.zeros((0, n)) if a_in is None else np.asarray(a_in, dtype=float),
        b_in=np.zeros(0) if b_in is None else np.asarray(b_in, dtype=float),
        a_eq=np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float),
        b_eq=np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float),
    )


def test_unconstrained_center():
    # min ||x - (1, 2)||^2
    prog = make_qp(np.eye(2), [-2.0, -4.0], const=5.0)
    out = solve_qp(prog)
    assert out.status == STATUS_OPTIMAL
    np.testing.assert_allclose(out.x, [1.0, 2.0], atol=1e-9)
    assert out.objective == pytest.approx(0.0, abs=1e-9)


def test_corner_projection():
    # min ||x - (2,2)||^2 s.t. x1 + x2 <= 2, x >= 0, x1 - x2 >= 0.5
    prog = make_qp(np.eye(2), [-4.0, -4.0], const=8.0,
                   a_in=[[-1, -1], [1, 0], [0, 1], [1, -1]],
                   b_in=[-2.0, 0.0, 0.0, 0.5])
    out = solve_qp(prog)
    assert out.status == STATUS_OPTIMAL
    np.testing.assert_allclose(out.x, [1.25, 0.75], atol=1e-8)
    report = check_kkt(prog, out)
    assert report["pass"], report


def test_halfspace_projection():
    # min ||x||^2 s.t. x1 + x2 >= 2 -> (1, 1), objective 2
    prog = make_qp(np.eye(2), [0.0, 0.0], a_in=[[1.0, 1.0]], b_in=[2.0])
    out = solve_qp(prog)
    assert out.status == STATUS_OPTIMAL
    np.testing.assert_allclose(out.x, [1.0, 1.0], atol=1e-9)
    assert out.objective == pytest.approx(2.0, abs=1e-9)
    assert list(out.active_rows) == [0]


def test_equality_pins():
    prog = make_qp(np.eye(3), np.zeros(3),
                   a_eq=[[1, 0, 0], [0, 1, 0]], b_eq=[2.0, -1.0])
    out = solve_qp(prog)
    assert out.status == STATUS_OPTIMAL
    np.testing.assert_allclose(out.x, [2.0, -1.0, 0.0], atol=1e-9)


def test_infeasible_rows():
    prog = make_qp(np.eye(1), [0.0], a_in=[[1.0], [-1.0]], b_in=[1.0, 0.0])
    out = solve_qp(prog)
    assert out.status == STATUS_INFEASIBLE


def test_semidefinite_ray_detected():
    # zero curvature along x2 and a linear drift makes it unbounded
    q = np.array([[1.0, 0.0], [0.0, 0.0]])
    prog = make_qp(q, [0.0, -1.0])
    out = solve_qp(prog)
    assert out.status == STATUS_UNBOUNDED


def test_semidefinite_flat_optimum():
    # zero curvature along x2 but no drift: any x2 is optimal
    q = np.array([[1.0, 0.0], [0.0, 0.0]])
    prog = make_qp(q, [-2.0, 0.0], a_in=[[0.0, 1.0]], b_in=[0.0])
    out = solve_qp(prog)
    assert out.status == STATUS_OPTIMAL
    assert out.x[0] == pytest.approx(1.0, abs=1e-9)


def test_warm_start_agrees_with_cold():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = 3
        m = rng.normal(size=(n, n))
        q = m @ m.T + np.eye(n)
        a = rng.normal(size=(5, n))
        x0 = rng.normal(size=n)
        b = a @ x0 - rng.uniform(0.1, 1.0, size=5)
        c = rng.normal(size=n)
        from dataclasses import replace
        cold = solve_qp(make_qp(q, c, a_in=a, b_in=b))
        warm = solve_qp(replace(make_qp(q, c, a_in=a, b_in=b), warm_start=x0))
        assert cold.status == warm.status == STATUS_OPTIMAL
        assert cold.objective == pytest.approx(warm.objective, abs=1e-7)


def test_diagonal_and_dense_quadratic_agree():
    rng = np.random.default_rng(5)
    for _ in range(20):
        n = 4
        d = rng.uniform(0.5, 3.0, size=n)
        a = rng.normal(size=(6, n))
        x0 = rng.normal(size=n)
        b = a @ x0 - rng.uniform(0.1, 1.0, size=6)
        c = rng.normal(size=n)
        out1 = solve_qp(make_qp(np.diag(d), c, a_in=a, b_in=b))
        out2 = solve_qp(make_qp(d, c, a_in=a, b_in=b))
        assert out1.status == out2.status == STATUS_OPTIMAL
        assert out1.objective == pytest.approx(out2.objective, abs=1e-8)
        np.testing.assert_allclose(out1.x, out2.x, atol=1e-6)


def test_random_qps_match_enumeration_oracle():
    rng = np.random.default_rng(9)
    for _ in range(40):
        n = int(rng.integers(2, 4))
        cs_rows = int(rng.integers(2, 6))
        a = rng.normal(size=(cs_rows, n))
        x0 = rng.normal(size=n)
        b = a @ x0 - rng.uniform(0.05, 1.0, size=cs_rows)
        cs = ConstraintSet(n=n, a_eq=np.zeros((0, n)), b_eq=np.zeros(0),
                           a_in=a, b_in=b)
        x_bar = rng.normal(size=n)
        cost = CostFunction.l2(n, weights=rng.uniform(0.5, 2.0, size=n))
        prog = assemble_program(cost, x_bar, cs)
        out = solve_qp(prog)
        assert out.status == STATUS_OPTIMAL
        ref = oracle_report(cs, cost, x_bar, "kkt_enumeration")
        assert out.objective == pytest.approx(ref.objective, abs=1e-7)
        report = check_kkt(prog, out)
        assert report["pass"], report


def test_duals_live_on_normalized_rows():
    # row scaled by 10: the dual scales down, the certificate still passes
    prog = make_qp(np.eye(2), [0.0, 0.0], a_in=[[10.0, 10.0]], b_in=[20.0])
    out = solve_qp(prog)
    assert out.status == STATUS_OPTIMAL
    np.testing.assert_allclose(out.x, [1.0, 1.0], atol=1e-9)
    assert check_kkt(prog, out)["pass"]
