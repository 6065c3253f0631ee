"""HTTP service wrapping the explanation engine.

Small REST surface over an in-memory tree store:

    POST /trees                     upload a tree document -> {"id": ...}
    GET  /trees/{id}                schema plus per-leaf labels
    POST /trees/{id}/predict        {"instance": {...}}
    POST /trees/{id}/explain        {"instance", "target", "cost"?, "constraints"?,
                                     "epsilon"?, "diverse_k"?}
    POST /trees/{id}/search-baseline same, plus {"dataset": <dataset document>}
    GET  /health

Status mapping: 400 malformed documents, 404 unknown tree id, 409 store full
of in-use trees, 422 inputs that parse but violate the schema or contradict
each other, 500 solver failure, 503 solve queue timeout. The store evicts
least-recently-used idle trees once capacity is reached; trees being solved
against are never evicted. When a store directory is configured, uploaded
trees are written there and reloaded lazily after eviction or restart.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from collections import OrderedDict
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.concurrency import run_in_threadpool
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .constraints import (target_from_document, user_constraints_from_document)
from .cost import CostFunction, cost_from_document
from .engine import Query, dataset_search, explain
from .errors import InputError, MalformedDocument, SolverError
from .schema import schema_to_document
from .tree import TreeModel, parse_tree, serialize_tree

DEFAULT_CAPACITY = 64
MAX_CONCURRENT_SOLVES = 4
QUEUE_TIMEOUT_S = 30.0


class StoreFull(Exception):
    """Capacity reached and every resident tree is currently in use."""


class UnknownTree(Exception):
    pass


class QueueTimeout(Exception):
    pass


# ---------------------------------------------------------------------------
# tree store
# ---------------------------------------------------------------------------

@dataclass
class _Entry:
    tree: TreeModel
    document: dict
    refcount: int = 0
    last_used: float = field(default_factory=time.monotonic)


class TreeStore:
    """LRU store keyed by content hash; busy entries are pinned."""

    def __init__(self, capacity: int = DEFAULT_CAPACITY, store_dir: str | None = None):
        self.capacity = max(1, int(capacity))
        self.store_dir = store_dir
        self._lock = threading.Lock()
        self._entries: OrderedDict[str, _Entry] = OrderedDict()
        if store_dir:
            os.makedirs(store_dir, exist_ok=True)

    @staticmethod
    def _tree_id(doc: dict) -> str:
        canon = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def put(self, doc: dict) -> str:
        tree = parse_tree(doc)           # validates before anything is stored
        doc = serialize_tree(tree)       # canonical form, so the id is stable
        tree_id = self._tree_id(doc)
        with self._lock:
            if tree_id in self._entries:
                self._entries.move_to_end(tree_id)
                return tree_id
            self._evict_if_needed()
            self._entries[tree_id] = _Entry(tree=tree, document=doc)
        if self.store_dir:
            path = os.path.join(self.store_dir, f"{tree_id}.json")
            with open(path, "w") as fh:
                json.dump(doc, fh)
        return tree_id

    def _evict_if_needed(self) -> None:
        # caller holds the lock
        while len(self._entries) >= self.capacity:
            victim = None
            for tid, entry in self._entries.items():   # oldest first
                if entry.refcount == 0:
                    victim = tid
                    break
            if victim is None:
                raise StoreFull(f"{self.capacity} trees resident, all in use")
            del self._entries[victim]

    def _load_from_disk(self, tree_id: str) -> _Entry | None:
        if not self.store_dir:
            return None
        path = os.path.join(self.store_dir, f"{tree_id}.json")
        if not os.path.exists(path):
            return None
        with open(path) as fh:
            doc = json.load(fh)
        return _Entry(tree=parse_tree(doc), document=doc)

    def acquire(self, tree_id: str) -> _Entry:
        """Pin an entry for use; pair with release()."""
        with self._lock:
            entry = self._entries.get(tree_id)
            if entry is None:
                entry = self._load_from_disk(tree_id)
                if entry is None:
                    raise UnknownTree(tree_id)
                self._evict_if_needed()
                self._entries[tree_id] = entry
            self._entries.move_to_end(tree_id)
            entry.refcount += 1
            entry.last_used = time.monotonic()
            return entry

    def release(self, tree_id: str) -> None:
        with self._lock:
            entry = self._entries.get(tree_id)
            if entry is not None and entry.refcount > 0:
                entry.refcount -= 1

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


# ---------------------------------------------------------------------------
# request parsing
# ---------------------------------------------------------------------------

def _require_fields(body: dict, allowed: set[str], required: set[str]) -> None:
    if not isinstance(body, dict):
        raise MalformedDocument("request body must be a JSON object")
    unknown = set(body) - allowed
    if unknown:
        raise MalformedDocument(f"unknown fields: {sorted(unknown)}")
    missing = required - set(body)
    if missing:
        raise MalformedDocument(f"missing fields: {sorted(missing)}")


def _build_query(tree: TreeModel, body: dict) -> Query:
    from .schema import encode

    instance = body["instance"]
    if not isinstance(instance, dict):
        raise MalformedDocument("instance must be {feature: value}")
    x_bar = encode(tree.schema, instance)
    target = target_from_document(body["target"])
    dim = tree.schema.encoded_dim
    cost_doc = body.get("cost")
    cost = CostFunction.l2(dim) if cost_doc is None else cost_from_document(cost_doc, dim)
    user = user_constraints_from_document(body.get("constraints"))
    epsilon = body.get("epsilon")
    if epsilon is not None and not isinstance(epsilon, (int, float)):
        raise MalformedDocument("epsilon must be a number")
    return Query(tree=tree, x_bar=x_bar, target=target, cost=cost, user=user,
                 epsilon=None if epsilon is None else float(epsilon))


# ---------------------------------------------------------------------------
# app factory
# ---------------------------------------------------------------------------

def create_app(max_trees: int | None = None, store_dir: str | None = None,
               max_concurrent: int = MAX_CONCURRENT_SOLVES,
               queue_timeout: float = QUEUE_TIMEOUT_S) -> FastAPI:
    capacity = max_trees if max_trees is not None else \
        int(os.environ.get("CFTREE_MAX_TREES", str(DEFAULT_CAPACITY)))
    store_dir = store_dir if store_dir is not None else os.environ.get("CFTREE_STORE_DIR")

    app = FastAPI(title="cftree", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    store = TreeStore(capacity=capacity, store_dir=store_dir)
    solve_gate = threading.BoundedSemaphore(max_concurrent)
    app.state.store = store

    # -- error mapping ------------------------------------------------------

    def _json_error(status: int, exc: Exception, **extra) -> JSONResponse:
        payload = {"error": str(exc) or exc.__class__.__name__}
        payload.update(extra)
        return JSONResponse(payload, status_code=status)

    @app.exception_handler(MalformedDocument)
    async def _on_malformed(_req, exc):
        return _json_error(400, exc)

    @app.exception_handler(InputError)
    async def _on_input(_req, exc):
        return _json_error(422, exc)

    @app.exception_handler(UnknownTree)
    async def _on_unknown(_req, exc):
        return _json_error(404, exc)

    @app.exception_handler(StoreFull)
    async def _on_full(_req, exc):
        return _json_error(409, exc)

    @app.exception_handler(QueueTimeout)
    async def _on_queue(_req, exc):
        return _json_error(503, exc)

    @app.exception_handler(SolverError)
    async def _on_solver(_req, exc):
        return _json_error(500, exc, ledger=getattr(exc, "ledger", []))

    async def _body(request: Request) -> dict:
        try:
            return await request.json()
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"invalid JSON: {exc}")

    # -- solve path ---------------------------------------------------------

    def _with_tree(tree_id: str, fn):
        entry = store.acquire(tree_id)
        try:
            return fn(entry)
        finally:
            store.release(tree_id)

    def _gated(fn):
        if not solve_gate.acquire(timeout=queue_timeout):
            raise QueueTimeout(f"solve queue full for {queue_timeout:g}s")
        try:
            return fn()
        finally:
            solve_gate.release()

    # -- routes -------------------------------------------------------------

    @app.get("/health")
    async def health():
        return {"status": "ok", "trees": len(store)}

    @app.post("/trees", status_code=201)
    async def upload_tree(request: Request):
        doc = await _body(request)
        tree_id = await run_in_threadpool(store.put, doc)
        return {"id": tree_id}

    @app.get("/trees/{tree_id}")
    async def tree_info(tree_id: str):
        def info(entry) -> dict:
            tree = entry.tree
            names = tree.schema.class_names
            leaves = []
            for leaf in tree.leaf_ids:
                label = tree.leaf_label(leaf)
                row = {"id": leaf, "label": label}
                if names:
                    row["class_name"] = names[label - 1]
                leaves.append(row)
            return {
                "id": tree_id,
                "kind": tree.kind,
                "classes": tree.classes,
                "class_names": list(names) if names else None,
                "schema": schema_to_document(tree.schema),
                "leaves": leaves,
                "decision_count": len(tree.decision_ids),
            }
        return await run_in_threadpool(_with_tree, tree_id, info)

    @app.post("/trees/{tree_id}/predict")
    async def predict_route(tree_id: str, request: Request):
        body = await _body(request)
        _require_fields(body, {"instance"}, {"instance"})

        def run(entry) -> dict:
            from .schema import encode
            tree = entry.tree
            x = encode(tree.schema, body["instance"])
            leaf = tree.route(x)
            label = tree.leaf_label(leaf)
            out = {"label": label, "leaf": leaf}
            if tree.schema.class_names:
                out["class_name"] = tree.schema.class_names[label - 1]
            return out
        return await run_in_threadpool(_with_tree, tree_id, run)

    @app.post("/trees/{tree_id}/explain")
    async def explain_route(tree_id: str, request: Request):
        body = await _body(request)
        _require_fields(
            body,
            {"instance", "target", "cost", "constraints", "epsilon", "diverse_k"},
            {"instance", "target"},
        )
        diverse_k = body.get("diverse_k")
        if diverse_k is not None and (isinstance(diverse_k, bool)
                                      or not isinstance(diverse_k, int) or diverse_k < 0):
            raise MalformedDocument("diverse_k must be a nonnegative integer")

        def run(entry) -> dict:
            query = _build_query(entry.tree, body)
            result = _gated(lambda: explain(query))
            doc = result.to_document()
            if diverse_k is not None:
                doc["diverse"] = doc["diverse"][:diverse_k]
            return doc
        return await run_in_threadpool(_with_tree, tree_id, run)

    @app.post("/trees/{tree_id}/search-baseline")
    async def search_route(tree_id: str, request: Request):
        body = await _body(request)
        _require_fields(
            body,
            {"instance", "target", "cost", "constraints", "epsilon", "dataset"},
            {"instance", "target"},
        )

        def run(entry) -> dict:
            from .fixtures import dataset_from_document
            query = _build_query(entry.tree, body)
            data = None
            if body.get("dataset") is not None:
                data = dataset_from_document(body["dataset"])
            elif query.user.candidate_set is None:
                raise InputError("search-baseline needs a dataset or "
                                 "constraints.candidate_set")
            result = _gated(lambda: dataset_search(query, data=data))
            return result.to_document()
        return await run_in_threadpool(_with_tree, tree_id, run)

    # -- optional static explorer -------------------------------------------

    ui_dir = os.environ.get("CFTREE_UI_DIR") or os.path.join("frontend", "dist")
    if os.path.isdir(ui_dir):
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app
