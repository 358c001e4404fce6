"""Cosine similarity over embedded statements."""
from __future__ import annotations

from typing import Any, Sequence

import numpy as np

from ..dataset import Statement
from .base import EmptyCorpus, MemoryBackend, ScoredStatement, embed_checked, normalize_rows, rank_scores


class DenseBackend(MemoryBackend):
    kind = "dense"

    def __init__(self, statements: Sequence[Statement], embedder, vectors: np.ndarray | None = None, **kw: Any):
        if not statements:
            raise EmptyCorpus("dense index needs at least one statement")
        super().__init__(statements, **kw)
        self.embedder = embedder
        if vectors is None:
            vectors = embed_checked(embedder, [s.text for s in self.statements])
        self.raw_vectors = np.asarray(vectors, dtype=np.float64)
        self.vectors = normalize_rows(self.raw_vectors)
        self.dim = self.vectors.shape[1]

    def similarities(self, query: str) -> np.ndarray:
        q = normalize_rows(embed_checked(self.embedder, [query], self.dim))[0]
        return self.vectors @ q

    def search(self, query: str, k: int) -> list[ScoredStatement]:
        return rank_scores(self.ids, self.similarities(query), k, ranks=self.id_rank)


def build_dense(statements: Sequence[Statement], embedder) -> DenseBackend:
    return DenseBackend(statements, embedder)
