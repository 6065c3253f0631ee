"""Command line front end.

Every subcommand is a thin shell over the library: parse flags into the
document formats the modules already accept, run one engine call, print a
short human summary, and write the full JSON result document to --out.
Exit codes: 0 success, 1 no feasible counterfactual (without
--allow-infeasible) or a rejected certificate, 2 bad input, 3 solver failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import fixtures
from .constraints import (TargetSpec, compile_constraints,
                          user_constraints_from_document)
from .cost import CostFunction, cost_from_document
from .engine import (STATUS_FOUND, Query, dataset_search, explain,
                     explain_diverse, explain_margin)
from .errors import CFTreeError, InputError, MalformedDocument, SolverError
from .oracles import oracle_report
from .program import check_kkt, outcome_from_document, program_from_document
from .schema import encode
from .tree import leaf_region, parse_tree, serialize_tree

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INPUT = 2
EXIT_SOLVER = 3


# ---------------------------------------------------------------------------
# shared flag -> object builders
# ---------------------------------------------------------------------------

def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise InputError(f"no such file: {path}")
    except json.JSONDecodeError as exc:
        raise MalformedDocument(f"{path}: invalid JSON ({exc})")


def _inline_or_file(text: str):
    """Flag values may be inline JSON or a path to a JSON file."""
    if os.path.exists(text):
        return _read_json(text)
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        raise InputError(f"not valid JSON and not an existing file: {text!r}")


def _load_tree(path: str):
    return parse_tree(_read_json(path))


def _load_instance(tree, path: str):
    raw = _read_json(path)
    if not isinstance(raw, dict):
        raise MalformedDocument("instance document must be {feature: value}")
    return raw, encode(tree.schema, raw)


def _build_cost(args, dim: int) -> CostFunction:
    distance = getattr(args, "distance", None) or "l2"
    weights = None
    if getattr(args, "weights", None):
        weights = _inline_or_file(args.weights)
    q = None
    if getattr(args, "q_matrix", None):
        q = _inline_or_file(args.q_matrix)
    if distance == "l1":
        return CostFunction.l1(dim, weights)
    if distance == "l2":
        return CostFunction.l2(dim, weights)
    if distance == "quadratic":
        if q is None:
            raise InputError("--distance quadratic needs --q-matrix")
        return cost_from_document({"variant": "quadratic", "q_matrix": q}, dim)
    if distance == "combo":
        # L1 plus a quadratic part: --q-matrix when coupled, else weighted L2.
        quad_term = ({"variant": "quadratic", "q_matrix": q} if q is not None
                     else {"variant": "l2", "weights": weights})
        return cost_from_document({"variant": "combination", "terms": [
            {"coefficient": 1.0, "cost": {"variant": "l1", "weights": weights}},
            {"coefficient": 1.0, "cost": quad_term},
        ]}, dim)
    raise InputError(f"unknown distance {distance!r}")


def _int_list(text: str, flag: str) -> list[int]:
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"{flag} expects comma separated integers, got {text!r}")


def _float_list(text: str, flag: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise InputError(f"{flag} expects comma separated numbers, got {text!r}")


def _build_target(args) -> TargetSpec:
    allow = bool(getattr(args, "allow_same_class", False))
    if getattr(args, "target", None) is not None:
        return TargetSpec.single(args.target, allow_same_class=allow)
    if getattr(args, "target_set", None):
        return TargetSpec.subset(_int_list(args.target_set, "--target-set"),
                                 allow_same_class=allow)
    if getattr(args, "class_costs", None):
        return TargetSpec.class_cost(_float_list(args.class_costs, "--class-costs"))
    raise InputError("pass one of --target / --target-set / --class-costs")


def _build_user(args):
    doc: dict = {}
    if getattr(args, "freeze", None):
        doc["freeze"] = [t.strip() for t in args.freeze.split(",") if t.strip()]
    for flag in ("bounds", "monotone", "max_delta"):
        value = getattr(args, flag, None)
        if value:
            parsed = _inline_or_file(value)
            if not isinstance(parsed, dict):
                raise MalformedDocument(f"--{flag.replace('_', '-')} must be an object")
            doc[flag] = parsed
    if getattr(args, "epsilon", None) is not None:
        doc["epsilon"] = args.epsilon
    if getattr(args, "candidate_set", None):
        doc["candidate_set"] = args.candidate_set
    if getattr(args, "label_source", None):
        doc["label_source"] = args.label_source
    return user_constraints_from_document(doc or None)


def _build_query(args, tree, x_bar) -> Query:
    threads = getattr(args, "threads", None)
    return Query(
        tree=tree,
        x_bar=x_bar,
        target=_build_target(args),
        cost=_build_cost(args, tree.schema.encoded_dim),
        user=_build_user(args),
        parallel=None if threads is None else threads > 1,
        max_workers=threads,
    )


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

def _scrub_meta(doc):
    """Zero wall-clock fields so repeated runs emit identical bytes."""
    if isinstance(doc, dict):
        return {k: (0.0 if k == "millis" else _scrub_meta(v)) for k, v in doc.items()}
    if isinstance(doc, list):
        return [_scrub_meta(v) for v in doc]
    return doc


def _emit(args, doc, summary: str) -> None:
    if getattr(args, "no_meta", False):
        doc = _scrub_meta(doc)
    text = json.dumps(doc, indent=1, sort_keys=True)
    out = getattr(args, "out", None)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
        print(summary)
    else:
        print(summary, file=sys.stderr)
        print(text)


def _change_lines(raw_bar: dict, raw_star: dict) -> list[str]:
    lines = []
    for name, new in raw_star.items():
        old = raw_bar.get(name)
        if isinstance(old, (int, float)) and isinstance(new, (int, float)) \
                and not isinstance(old, bool) and not isinstance(new, bool):
            if abs(float(old) - float(new)) <= 1e-9:
                continue
        elif old == new:
            continue
        lines.append(f"  {name}: {old} -> {new}")
    return lines or ["  (no feature changed)"]


def _result_summary(doc: dict, raw_bar: dict) -> str:
    if doc["status"] != STATUS_FOUND:
        return f"status: {doc['status']}"
    lines = [f"status: found  leaf={doc['leaf']}  objective={doc['objective']:.6g}"]
    if doc.get("boundary_adjusted"):
        lines.append("note: solution nudged strictly inside the leaf region")
    lines.extend(_change_lines(raw_bar, doc.get("raw") or {}))
    return "\n".join(lines)


def _found_exit(status: str, args) -> int:
    if status == STATUS_FOUND or getattr(args, "allow_infeasible", False):
        return EXIT_OK
    return EXIT_INFEASIBLE


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_predict(args) -> int:
    tree = _load_tree(args.tree)
    _, x = _load_instance(tree, args.instance)
    leaf = tree.route(x)
    label = tree.leaf_label(leaf)
    doc = {"label": label, "leaf": leaf}
    if tree.schema.class_names:
        doc["class_name"] = tree.schema.class_names[label - 1]
    _emit(args, doc, f"class {label} (leaf {leaf})")
    return EXIT_OK


def cmd_explain(args) -> int:
    tree = _load_tree(args.tree)
    raw_bar, x_bar = _load_instance(tree, args.instance)
    result = explain(_build_query(args, tree, x_bar))
    doc = result.to_document()
    _emit(args, doc, _result_summary(doc, raw_bar))
    return _found_exit(result.status, args)


def cmd_diverse(args) -> int:
    tree = _load_tree(args.tree)
    raw_bar, x_bar = _load_instance(tree, args.instance)
    results = explain_diverse(_build_query(args, tree, x_bar), args.diverse)
    docs = [r.to_document() for r in results]
    status = docs[0]["status"] if docs else "no_feasible_leaf"
    doc = {"status": status, "count": len(docs), "results": docs}
    if docs and status == STATUS_FOUND:
        head = [f"{len(docs)} counterfactual(s), cheapest first"]
        for d in docs:
            head.append(f"  leaf {d['leaf']}: objective {d['objective']:.6g}")
        summary = "\n".join(head)
    else:
        summary = f"status: {status}"
    _emit(args, doc, summary)
    return _found_exit(status, args)


def cmd_margin(args) -> int:
    tree = _load_tree(args.tree)
    raw_bar, x_bar = _load_instance(tree, args.instance)
    schedule = _float_list(args.epsilon_schedule, "--epsilon-schedule")
    pairs = explain_margin(_build_query(args, tree, x_bar), schedule)
    doc = {"schedule": schedule,
           "results": [{"epsilon": eps, "result": r.to_document()} for eps, r in pairs]}
    lines = []
    any_found = False
    for eps, r in pairs:
        if r.status == STATUS_FOUND:
            any_found = True
            lines.append(f"  epsilon {eps:g}: objective {r.objective:.6g} (leaf {r.leaf})")
        else:
            lines.append(f"  epsilon {eps:g}: {r.status}")
    _emit(args, doc, "margin sweep:\n" + "\n".join(lines))
    return _found_exit(STATUS_FOUND if any_found else "no_feasible_leaf", args)


def cmd_search_baseline(args) -> int:
    tree = _load_tree(args.tree)
    raw_bar, x_bar = _load_instance(tree, args.instance)
    if not getattr(args, "candidate_set", None):
        raise InputError("search-baseline needs --candidate-set")
    result = dataset_search(_build_query(args, tree, x_bar))
    doc = result.to_document()
    _emit(args, doc, _result_summary(doc, raw_bar))
    return _found_exit(result.status, args)


def cmd_gen_fixture(args) -> int:
    kind = args.kind
    if kind == "blobs":
        data = fixtures.make_blobs(args.d, args.k, args.n, args.seed)
        doc = fixtures.dataset_to_document(data)
        summary = f"blobs dataset: d={args.d} k={args.k} n={len(data.labels)} seed={args.seed}"
    elif kind == "adult":
        data = fixtures.make_adult_like(args.seed, n=args.n)
        doc = fixtures.dataset_to_document(data)
        summary = f"adult-like dataset: n={len(data.labels)} seed={args.seed}"
    elif kind == "axis-tree":
        data = fixtures.make_blobs(args.d, args.k, args.n, args.seed)
        tree = fixtures.train_axis_aligned(data, args.depth)
        doc = serialize_tree(tree)
        err = fixtures.training_error(tree, data)
        summary = (f"axis tree: {len(tree.leaf_ids)} leaves, depth<={args.depth}, "
                   f"training error {err:.3f}")
    elif kind == "oblique-tree":
        tree = fixtures.gen_random_oblique(args.d, args.depth, args.k, args.seed)
        doc = serialize_tree(tree)
        summary = f"oblique tree: {len(tree.leaf_ids)} leaves, depth {args.depth}"
    else:
        raise InputError(f"unknown fixture kind {kind!r}")
    _emit(args, doc, summary)
    return EXIT_OK


def cmd_bench(args) -> int:
    tree = _load_tree(args.tree)
    data = fixtures.load_dataset(args.data)
    k = tree.schema.class_count
    rng = np.random.default_rng(args.seed)
    user = _build_user(args)
    cost = _build_cost(args, tree.schema.encoded_dim)
    constrained = bool(user.freeze or user.bounds or user.monotone or user.max_delta)

    predicted = np.array([tree.leaf_label(tree.route(x)) for x in data.x])
    rows = []
    for y in range(1, k + 1):
        idx = np.where(predicted == y)[0]
        if idx.size == 0:
            continue
        pick = rng.choice(idx, size=min(args.per_class, idx.size), replace=False)
        millis, dists, found = [], [], 0
        for i in pick:
            query = Query(tree=tree, x_bar=data.x[i],
                          target=TargetSpec.single(1 + (y % k)),
                          cost=cost, user=user,
                          parallel=False if args.threads == 1 else None,
                          max_workers=args.threads)
            t0 = time.perf_counter()
            result = explain(query)
            millis.append(1e3 * (time.perf_counter() - t0))
            if result.status == STATUS_FOUND:
                found += 1
                # l2 objectives are squared distances; report the metric value
                d = np.sqrt(result.objective) if args.distance == "l2" else result.objective
                dists.append(d)
        rows.append({
            "class": y,
            "n": int(pick.size),
            "feasible_pct": 100.0 * found / pick.size,
            "distance_mean": float(np.mean(dists)) if dists else None,
            "distance_std": float(np.std(dists)) if dists else None,
            "ms_mean": float(np.mean(millis)),
        })

    doc = {"distance": args.distance, "constrained": constrained,
           "per_class": args.per_class, "rows": rows}
    header = f"{'class':>5} {'n':>4} {'feas%':>6} {'distance (mean+/-std)':>24} {'ms':>8}"
    lines = [header]
    for r in rows:
        if r["distance_mean"] is None:
            dist = "-"
        else:
            dist = f"{r['distance_mean']:.4f} +/- {r['distance_std']:.4f}"
        lines.append(f"{r['class']:>5} {r['n']:>4} {r['feasible_pct']:>6.1f} "
                     f"{dist:>24} {r['ms_mean']:>8.2f}")
    _emit(args, doc, "\n".join(lines))
    return EXIT_OK


def cmd_certify(args) -> int:
    prog = program_from_document(_read_json(args.program))
    outcome = outcome_from_document(_read_json(args.outcome))
    report = check_kkt(prog, outcome)
    if report["pass"]:
        summary = f"certificate accepted (kkt residual {report['kkt_residual']:.3e})"
    elif "reason" in report:
        summary = f"certificate rejected: {report['reason']}"
    else:
        summary = f"certificate rejected (kkt residual {report['kkt_residual']:.3e})"
    _emit(args, report, summary)
    return EXIT_OK if report["pass"] else EXIT_INFEASIBLE


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    port = args.port if args.port is not None else int(os.environ.get("CFTREE_PORT", "8080"))
    app = create_app(max_trees=args.max_trees, store_dir=args.store_dir)
    uvicorn.run(app, host=args.host, port=port, log_level="warning")
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Hidden: brute-force reference minimum for one leaf's subproblem."""
    tree = _load_tree(args.tree)
    _, x_bar = _load_instance(tree, args.instance)
    user = _build_user(args)
    cost = _build_cost(args, tree.schema.encoded_dim)
    region = leaf_region(tree, args.leaf)
    cs = compile_constraints(tree.schema, x_bar, user, region, epsilon=user.epsilon)
    rep = oracle_report(cs, cost, x_bar, args.mode, seed=args.seed,
                        objective_cap=args.objective_cap,
                        grid_points=args.grid_points, refinements=args.refinements)
    doc = {
        "mode": rep.mode,
        "objective": None if not np.isfinite(rep.objective) else float(rep.objective),
        "x": None if rep.x is None else [float(v) for v in rep.x],
        "resolution": None if np.isnan(rep.resolution) else float(rep.resolution),
        "n_feasible": int(rep.n_feasible),
    }
    obj = "infeasible" if doc["objective"] is None else f"{doc['objective']:.9g}"
    _emit(args, doc, f"{rep.mode} minimum: {obj}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _add_io(p: argparse.ArgumentParser, instance: bool = True) -> None:
    p.add_argument("--tree", required=True, help="tree document (JSON file)")
    if instance:
        p.add_argument("--instance", required=True,
                       help="source instance: {feature: value} JSON file")
    p.add_argument("--out", help="write the full JSON document here")
    p.add_argument("--no-meta", action="store_true",
                   help="zero timing fields so repeated runs are byte-identical")


def _add_target(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--target", type=int, help="single target class (1-based)")
    g.add_argument("--target-set", help="comma separated target classes, e.g. 2,3")
    g.add_argument("--class-costs",
                   help="comma separated per-class prices L(y), one per class")
    p.add_argument("--allow-same-class", action="store_true",
                   help="permit targets that include the current class")


def _add_cost(p: argparse.ArgumentParser) -> None:
    p.add_argument("--distance", choices=["l1", "l2", "quadratic", "combo"],
                   default="l2", help="edit cost family (default l2)")
    p.add_argument("--weights", help="per-coordinate weights: JSON list or file")
    p.add_argument("--q-matrix",
                   help='quadratic matrix: JSON, {"grid": [h, w]}, or file')


def _add_constraints(p: argparse.ArgumentParser) -> None:
    p.add_argument("--freeze", help="comma separated feature names to hold fixed")
    p.add_argument("--bounds", help='JSON {"name": [lo, hi]} or file')
    p.add_argument("--monotone",
                   help='JSON {"name": "nondecreasing"|"nonincreasing"} or file')
    p.add_argument("--max-delta", help='JSON {"name": cap} or file')
    p.add_argument("--epsilon", type=float, help="margin added to region rows")
    p.add_argument("--threads", type=int,
                   help="cap per-query leaf parallelism (1 disables threads)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cftree",
        description="Exact minimum-cost counterfactuals for decision trees.")
    visible = ("{predict,explain,diverse,margin,search-baseline,"
               "gen-fixture,bench,certify,serve}")
    sub = parser.add_subparsers(dest="command", required=True, metavar=visible)

    p = sub.add_parser("predict", help="route one instance and report its class")
    _add_io(p)
    p.set_defaults(handler=cmd_predict)

    p = sub.add_parser("explain", help="minimum-cost counterfactual for one instance")
    _add_io(p)
    _add_target(p)
    _add_cost(p)
    _add_constraints(p)
    p.add_argument("--candidate-set", help="dataset file: search it instead of solving")
    p.add_argument("--label-source", choices=["tree_prediction", "ground_truth"],
                   help="how candidate-set rows are labeled")
    p.add_argument("--allow-infeasible", action="store_true",
                   help="exit 0 even when no target leaf is feasible")
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("diverse", help="cheapest counterfactual per feasible leaf")
    _add_io(p)
    _add_target(p)
    _add_cost(p)
    _add_constraints(p)
    p.add_argument("--diverse", type=int, default=3, metavar="K",
                   help="number of alternatives (default 3)")
    p.add_argument("--allow-infeasible", action="store_true")
    p.set_defaults(handler=cmd_diverse)

    p = sub.add_parser("margin", help="counterfactuals along a margin schedule")
    _add_io(p)
    _add_target(p)
    _add_cost(p)
    _add_constraints(p)
    p.add_argument("--epsilon-schedule", required=True,
                   help="comma separated, starting at 0 and increasing, e.g. 0,0.1,0.5")
    p.add_argument("--allow-infeasible", action="store_true")
    p.set_defaults(handler=cmd_margin)

    p = sub.add_parser("search-baseline",
                       help="nearest qualifying dataset row (no solving)")
    _add_io(p)
    _add_target(p)
    _add_cost(p)
    _add_constraints(p)
    p.add_argument("--candidate-set", required=True, help="dataset file to search")
    p.add_argument("--label-source", choices=["tree_prediction", "ground_truth"],
                   default="tree_prediction")
    p.add_argument("--allow-infeasible", action="store_true")
    p.set_defaults(handler=cmd_search_baseline)

    p = sub.add_parser("gen-fixture", help="generate synthetic datasets and trees")
    p.add_argument("--kind", required=True,
                   choices=["blobs", "adult", "axis-tree", "oblique-tree"])
    p.add_argument("--d", type=int, default=4, help="continuous dimension")
    p.add_argument("--k", type=int, default=2, help="class count")
    p.add_argument("--n", type=int, default=60, help="points per class / total rows")
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the document here")
    p.add_argument("--no-meta", action="store_true")
    p.set_defaults(handler=cmd_gen_fixture)

    p = sub.add_parser("bench", help="timing and feasibility table over a dataset")
    p.add_argument("--tree", required=True)
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--per-class", type=int, default=20)
    _add_cost(p)
    _add_constraints(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--no-meta", action="store_true")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("certify", help="re-check a solver outcome's optimality")
    p.add_argument("--program", required=True, help="program document (JSON file)")
    p.add_argument("--outcome", required=True, help="outcome document (JSON file)")
    p.add_argument("--out")
    p.add_argument("--no-meta", action="store_true")
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=None,
                   help="default: CFTREE_PORT or 8080")
    p.add_argument("--max-trees", type=int, default=None)
    p.add_argument("--store-dir", default=None)
    p.set_defaults(handler=cmd_serve)

    # intentionally absent from the visible metavar: reference brute force
    p = sub.add_parser("oracle")
    _add_io(p)
    _add_cost(p)
    _add_constraints(p)
    p.add_argument("--leaf", type=int, required=True)
    p.add_argument("--mode", default="grid",
                   choices=["grid", "kkt_enumeration", "sampling"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--objective-cap", type=float, default=None)
    p.add_argument("--grid-points", type=int, default=21)
    p.add_argument("--refinements", type=int, default=2)
    p.set_defaults(handler=cmd_oracle)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except CFTreeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
