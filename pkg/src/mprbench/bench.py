"""Timing comparison of the compiled and pure-Python kernels."""
from __future__ import annotations

import time
from typing import Any, Callable

import numpy as np

from . import _kernels_py, kernels
from .memory.sparse import SparseBackend
from .dataset import Statement


def _time(fn: Callable[[], Any], repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _corpus(n_docs: int, vocab: int, rng: np.random.Generator) -> list[Statement]:
    words = [f"w{i}" for i in range(vocab)]
    return [
        Statement(f"d{i:06d}", " ".join(rng.choice(words, size=int(rng.integers(5, 15)))), f"e{i}", "bench")
        for i in range(n_docs)
    ]


def run_benchmark(n_docs: int = 15000, vocab: int = 2000, n_points: int = 15000, dim: int = 256, k: int = 50,
                  repeat: int = 5, seed: int = 0) -> list[dict[str, Any]]:
    rng = np.random.default_rng(seed)
    sparse = SparseBackend(_corpus(n_docs, vocab, rng))
    queries = [sparse.query_terms(" ".join(f"w{j}" for j in rng.integers(0, vocab, 20))) for _ in range(50)]
    args = (sparse.indptr, sparse.doc_ids, sparse.tfs, sparse.idf, sparse.doc_len, sparse.avgdl, sparse.k1, sparse.b)
    X = rng.normal(size=(n_points, dim))
    C = rng.normal(size=(k, dim))

    impls = {"python": _kernels_py}
    if kernels.BACKEND == "cython":
        impls["cython"] = kernels._impl
    rows = []
    for name, impl in impls.items():
        t_bm25 = _time(lambda: [impl.bm25_scores(q, *args) for q in queries], repeat)
        t_km = _time(lambda: impl.kmeans_assign(X, C), repeat)
        rows.append({"backend": name, "bm25_50_queries_s": t_bm25, "kmeans_assign_s": t_km})
    return rows


def format_rows(rows: list[dict[str, Any]]) -> str:
    lines = [f"{'backend':<8} {'bm25 (50 q)':>12} {'kmeans assign':>14}"]
    for r in rows:
        lines.append(f"{r['backend']:<8} {r['bm25_50_queries_s']:>11.4f}s {r['kmeans_assign_s']:>13.4f}s")
    return "\n".join(lines)
