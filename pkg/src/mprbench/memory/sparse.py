"""BM25 over an inverted index."""
from __future__ import annotations

from collections import Counter
from typing import Any, Sequence

import numpy as np

from .. import kernels
from ..dataset import Statement
from .base import EmptyCorpus, MemoryBackend, ScoredStatement, rank_scores, tokenize

K1 = 1.5
B = 0.75


def bm25_idf(n_docs: int, df: np.ndarray) -> np.ndarray:
    return np.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


class SparseBackend(MemoryBackend):
    kind = "sparse"

    def __init__(self, statements: Sequence[Statement], k1: float = K1, b: float = B, **kw: Any):
        if not statements:
            raise EmptyCorpus("sparse index needs at least one statement")
        super().__init__(statements, **kw)
        self.k1 = k1
        self.b = b
        docs = [Counter(tokenize(s.text)) for s in self.statements]
        vocab = sorted({t for d in docs for t in d})
        self.vocab = {t: i for i, t in enumerate(vocab)}
        postings: list[list[tuple[int, int]]] = [[] for _ in vocab]
        for d, counts in enumerate(docs):
            for tok, tf in counts.items():
                postings[self.vocab[tok]].append((d, tf))
        self.indptr = np.zeros(len(vocab) + 1, dtype=np.int64)
        self.indptr[1:] = np.cumsum([len(p) for p in postings])
        self.doc_ids = np.array([d for p in postings for d, _ in p], dtype=np.int64)
        self.tfs = np.array([tf for p in postings for _, tf in p], dtype=np.float64)
        self.doc_len = np.array([sum(c.values()) for c in docs], dtype=np.float64)
        self.avgdl = float(self.doc_len.mean()) if self.doc_len.sum() > 0 else 1.0
        df = np.diff(self.indptr).astype(np.float64)
        self.idf = bm25_idf(len(self.statements), df)

    def query_terms(self, query: str) -> np.ndarray:
        seen: dict[int, None] = {}
        for tok in tokenize(query):
            tid = self.vocab.get(tok)
            if tid is not None:
                seen.setdefault(tid, None)
        return np.fromiter(seen, dtype=np.int64, count=len(seen))

    def scores(self, query: str) -> np.ndarray:
        return kernels.bm25_scores(
            self.query_terms(query), self.indptr, self.doc_ids, self.tfs, self.idf,
            self.doc_len, self.avgdl, self.k1, self.b,
        )

    def search(self, query: str, k: int) -> list[ScoredStatement]:
        return rank_scores(self.ids, self.scores(query), k, ranks=self.id_rank)

    def params(self) -> dict[str, Any]:
        return {"k1": self.k1, "b": self.b}


def build_sparse(statements: Sequence[Statement], k1: float = K1, b: float = B) -> SparseBackend:
    return SparseBackend(statements, k1=k1, b=b)
