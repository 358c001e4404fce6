"""On-disk index persistence: one directory per backend."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Any

import numpy as np

from ..dataset import Statement
from .base import INDEX_SCHEMA, MemoryBackend, MemoryIndexError, corpus_hash
from .baselines import IgnoramusBackend, OracleBackend
from .dense import DenseBackend
from .graphrag import GraphBackend, KGNode
from .sparse import SparseBackend
from .tree import TreeBackend, TreeNode


class IndexMismatch(MemoryIndexError):
    pass


def save_backend(backend: MemoryBackend, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "statements.jsonl", "w", encoding="utf-8") as fh:
        for s in backend.statements:
            fh.write(json.dumps(asdict(s), ensure_ascii=False) + "\n")
    if isinstance(backend, (DenseBackend, TreeBackend, GraphBackend)):
        np.save(out / "vectors.npy", backend.raw_vectors)
    if isinstance(backend, TreeBackend):
        nodes = [asdict(n) for n in backend.nodes]
        (out / "nodes.json").write_text(json.dumps(nodes, ensure_ascii=False), encoding="utf-8")
    if isinstance(backend, GraphBackend):
        payload = {"nodes": [asdict(n) for n in backend.kg_nodes], "triples": [list(t) for t in backend.triples]}
        (out / "kg.json").write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")
    manifest = {
        "schema": INDEX_SCHEMA,
        "kind": backend.kind,
        "params": backend.params(),
        "k_default": backend.k_default,
        "corpus_hash": corpus_hash(backend.statements),
        "statements": len(backend.statements),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def load_backend(path: str | Path, embedder=None) -> MemoryBackend:
    """Rebuild a saved backend; dense, tree and graph kinds need the query embedder."""
    src = Path(path)
    manifest: dict[str, Any] = json.loads((src / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("schema") != INDEX_SCHEMA:
        raise IndexMismatch(f"unsupported index schema {manifest.get('schema')!r}")
    with open(src / "statements.jsonl", encoding="utf-8") as fh:
        statements = [Statement(**json.loads(line)) for line in fh if line.strip()]
    if corpus_hash(statements) != manifest["corpus_hash"]:
        raise IndexMismatch(f"corpus hash mismatch in {src}")
    kind, params, k = manifest["kind"], manifest.get("params", {}), manifest.get("k_default", 20)
    if kind == "sparse":
        return SparseBackend(statements, k_default=k, **params)
    if kind in ("oracle", "ignoramus"):
        cls = OracleBackend if kind == "oracle" else IgnoramusBackend
        return cls(statements, k_default=k)
    if embedder is None:
        raise MemoryIndexError(f"loading a {kind} index needs an embedder")
    vectors = np.load(src / "vectors.npy")
    if kind == "dense":
        return DenseBackend(statements, embedder, vectors=vectors, k_default=k)
    if kind == "tree":
        raw = json.loads((src / "nodes.json").read_text(encoding="utf-8"))
        nodes = [TreeNode(n["id"], n["text"], tuple(n["children"]), n["statement_id"]) for n in raw]
        return TreeBackend(statements, None, embedder, nodes=nodes, vectors=vectors, k_default=k, **params)
    if kind == "graph":
        raw = json.loads((src / "kg.json").read_text(encoding="utf-8"))
        nodes = [KGNode(n["id"], n["kind"], n["text"], tuple(n["statements"])) for n in raw["nodes"]]
        triples = [tuple(t) for t in raw["triples"]]
        return GraphBackend(statements, None, embedder, kg_nodes=nodes, triples=triples, vectors=vectors, k_default=k, **params)
    raise IndexMismatch(f"unknown index kind {kind!r}")
