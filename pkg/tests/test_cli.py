import json
import subprocess
import sys

import numpy as np
import pytest

from cftree.constraints import TargetSpec
from cftree.cost import CostFunction, assemble_program
from cftree.engine import Query, explain
from cftree.fixtures import make_blobs, save_dataset, train_axis_aligned
from cftree.program import program_to_document
from cftree.qp import solve_qp
from cftree.tree import leaf_region, parse_tree, predict, serialize_tree
from cftree.constraints import UserConstraints, compile_constraints


def run_cli(*argv):
    return subprocess.run([sys.executable, "-m", "cftree.cli", *argv],
                          capture_output=True, text=True)


@pytest.fixture()
def workdir(tmp_path):
    """Tree + instance files for a small trained model."""
    data = make_blobs(d=2, k=2, n_per_class=30, seed=3)
    tree = train_axis_aligned(data, max_depth=3)
    tree_path = tmp_path / "tree.json"
    tree_path.write_text(json.dumps(serialize_tree(tree)))
    x_bar = data.x[0]
    inst_path = tmp_path / "instance.json"
    inst_path.write_text(json.dumps({"f0": float(x_bar[0]), "f1": float(x_bar[1])}))
    data_path = tmp_path / "data.json"
    save_dataset(data, str(data_path))
    source = predict(tree, x_bar)
    return {
        "tmp": tmp_path, "tree": tree, "x_bar": x_bar, "data": data,
        "tree_path": str(tree_path), "inst_path": str(inst_path),
        "data_path": str(data_path),
        "source": source, "target": source % 2 + 1,
    }


def test_gen_fixture_dataset(tmp_path):
    out = tmp_path / "blobs.json"
    proc = run_cli("gen-fixture", "--kind", "blobs", "--d", "2", "--k", "2",
                   "--n", "10", "--seed", "3", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert set(doc) >= {"schema", "rows", "labels", "seed"}
    assert len(doc["rows"]) == 20
    assert doc["seed"] == 3


def test_gen_fixture_trees_parse(tmp_path):
    for kind in ("axis-tree", "oblique-tree"):
        out = tmp_path / f"{kind}.json"
        proc = run_cli("gen-fixture", "--kind", kind, "--d", "3", "--k", "2",
                       "--n", "30", "--depth", "2", "--seed", "1", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        tree = parse_tree(json.loads(out.read_text()))
        assert tree.schema.encoded_dim == 3


def test_gen_fixture_unknown_kind():
    proc = run_cli("gen-fixture", "--kind", "moons")
    assert proc.returncode == 2
    assert "error" in proc.stderr


def test_predict_reports_class(workdir):
    out = workdir["tmp"] / "pred.json"
    proc = run_cli("predict", "--tree", workdir["tree_path"],
                   "--instance", workdir["inst_path"], "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["label"] == workdir["source"]
    assert f"class {workdir['source']}" in proc.stdout


def test_explain_matches_library(workdir):
    out = workdir["tmp"] / "res.json"
    proc = run_cli("explain", "--tree", workdir["tree_path"],
                   "--instance", workdir["inst_path"],
                   "--target", str(workdir["target"]), "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["status"] == "found"
    ref = explain(Query(tree=workdir["tree"], x_bar=workdir["x_bar"],
                        target=TargetSpec.single(workdir["target"]),
                        cost=CostFunction.l2(2)))
    assert doc["objective"] == pytest.approx(ref.objective, abs=1e-12)
    assert np.asarray(doc["x_star"]) == pytest.approx(ref.x, abs=1e-12)
    assert "status: found" in proc.stdout


def test_no_meta_output_is_reproducible(workdir):
    outs = []
    for name in ("a.json", "b.json"):
        out = workdir["tmp"] / name
        proc = run_cli("explain", "--tree", workdir["tree_path"],
                       "--instance", workdir["inst_path"],
                       "--target", str(workdir["target"]),
                       "--no-meta", "--out", str(out))
        assert proc.returncode == 0, proc.stderr
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_infeasible_exit_codes(workdir):
    args = ("explain", "--tree", workdir["tree_path"],
            "--instance", workdir["inst_path"],
            "--target", str(workdir["target"]),
            "--freeze", "f0,f1")
    assert run_cli(*args).returncode == 1
    assert run_cli(*args, "--allow-infeasible").returncode == 0


def test_input_error_exit_codes(workdir):
    proc = run_cli("explain", "--tree", "/nonexistent/tree.json",
                   "--instance", workdir["inst_path"], "--target", "2")
    assert proc.returncode == 2
    proc = run_cli("explain", "--tree", workdir["tree_path"],
                   "--instance", workdir["inst_path"], "--target", "99")
    assert proc.returncode == 2
    assert "error" in proc.stderr


def test_diverse_command(workdir):
    out = workdir["tmp"] / "div.json"
    proc = run_cli("diverse", "--tree", workdir["tree_path"],
                   "--instance", workdir["inst_path"],
                   "--target", str(workdir["target"]),
                   "--diverse", "2", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["status"] == "found"
    assert 1 <= doc["count"] <= 2
    objs = [r["objective"] for r in doc["results"]]
    assert objs == sorted(objs)


def test_margin_command(workdir):
    out = workdir["tmp"] / "margin.json"
    proc = run_cli("margin", "--tree", workdir["tree_path"],
                   "--instance", workdir["inst_path"],
                   "--target", str(workdir["target"]),
                   "--epsilon-schedule", "0,0.05,0.1", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["schedule"] == [0.0, 0.05, 0.1]
    objs = [r["result"]["objective"] for r in doc["results"]
            if r["result"]["status"] == "found"]
    assert objs == sorted(objs)


def test_search_baseline_command(workdir):
    out = workdir["tmp"] / "base.json"
    proc = run_cli("search-baseline", "--tree", workdir["tree_path"],
                   "--instance", workdir["inst_path"],
                   "--target", str(workdir["target"]),
                   "--candidate-set", workdir["data_path"], "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["status"] == "found"
    # the exact engine never loses to the pool
    ref = explain(Query(tree=workdir["tree"], x_bar=workdir["x_bar"],
                        target=TargetSpec.single(workdir["target"]),
                        cost=CostFunction.l2(2)))
    assert ref.objective <= doc["objective"] + 1e-9


def test_bench_command(workdir):
    out = workdir["tmp"] / "bench.json"
    proc = run_cli("bench", "--tree", workdir["tree_path"],
                   "--data", workdir["data_path"],
                   "--per-class", "3", "--no-meta", "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["rows"]
    for row in doc["rows"]:
        assert 0.0 <= row["feasible_pct"] <= 100.0


def test_certify_accepts_and_rejects(tmp_path):
    rng = np.random.default_rng(1)
    cs = compile_constraints  # noqa: F841  (imported for parity with engine path)
    a = np.vstack([np.eye(3), -np.eye(3)])
    b = np.concatenate([np.zeros(3), -2.0 * np.ones(3)])
    from cftree.program import ProgramInstance
    prog = ProgramInstance(n=3, quadratic=np.eye(3),
                           linear=np.array([-4.0, 1.0, 0.0]), constant=2.0,
                           a_in=a, b_in=b,
                           a_eq=np.zeros((0, 3)), b_eq=np.zeros(0))
    outcome = solve_qp(prog)
    assert outcome.status == "optimal"
    prog_path = tmp_path / "prog.json"
    prog_path.write_text(json.dumps(program_to_document(prog)))
    good = tmp_path / "good.json"
    good.write_text(json.dumps(outcome.to_document()))
    proc = run_cli("certify", "--program", str(prog_path), "--outcome", str(good))
    assert proc.returncode == 0, proc.stderr
    assert "accepted" in proc.stderr
    assert json.loads(proc.stdout)["pass"] is True

    doc = outcome.to_document()
    doc["x"][0] += 0.37
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    proc = run_cli("certify", "--program", str(prog_path), "--outcome", str(bad))
    assert proc.returncode == 1
    assert "rejected" in proc.stderr
    assert json.loads(proc.stdout)["pass"] is False


def test_oracle_command_bounds_engine(workdir):
    tree = workdir["tree"]
    target_leaves = [nid for nid in tree.leaf_ids
                     if tree.leaf_label(nid) == workdir["target"]]
    ref = explain(Query(tree=tree, x_bar=workdir["x_bar"],
                        target=TargetSpec.single(workdir["target"]),
                        cost=CostFunction.l2(2)))
    out = workdir["tmp"] / "oracle.json"
    proc = run_cli("oracle", "--tree", workdir["tree_path"],
                   "--instance", workdir["inst_path"],
                   "--leaf", str(ref.leaf), "--mode", "grid",
                   "--objective-cap", str(ref.objective + 1e-6),
                   "--out", str(out))
    assert proc.returncode == 0, proc.stderr
    doc = json.loads(out.read_text())
    assert doc["mode"] == "grid"
    assert doc["objective"] is not None
    # lattice points are feasible, so the grid value upper-bounds the engine
    # up to the routing nudge (the engine pays a safety margin to sit
    # strictly inside strict-branch rows; the grid solves the closed region)
    assert doc["objective"] >= ref.objective - 1e-6
    assert doc["objective"] - ref.objective <= doc["resolution"] + 1e-6
    assert ref.leaf in target_leaves
