"""Shared pieces of the explicit-memory backends."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from ..dataset import Statement
from ..rng import stable_hash

DEFAULT_K = 20
INDEX_SCHEMA = "mprbench.index/1"

_WORD_RE = re.compile(r"\w+")


class MemoryIndexError(Exception):
    pass


class EmptyCorpus(MemoryIndexError):
    pass


class BackendUnbuilt(MemoryIndexError):
    pass


class EmbedderFailure(MemoryIndexError):
    pass


class DimensionMismatch(MemoryIndexError):
    pass


class SummarizerFailure(MemoryIndexError):
    pass


class ExtractorFailure(MemoryIndexError):
    pass


class MissingReference(MemoryIndexError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase Unicode word split; no stemming, no stopwords."""
    return _WORD_RE.findall(text.lower())


@dataclass(frozen=True)
class ScoredStatement:
    statement_id: str
    score: float
    rank: int


def corpus_hash(statements: Iterable[Statement]) -> str:
    return stable_hash(json.dumps([[s.id, s.text] for s in statements], ensure_ascii=False))


def id_ranks(ids: Sequence[str]) -> np.ndarray:
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[sorted(range(len(ids)), key=ids.__getitem__)] = np.arange(len(ids))
    return ranks


def rank_scores(
    ids: Sequence[str], scores: np.ndarray, k: int, keep: np.ndarray | None = None, ranks: np.ndarray | None = None
) -> list[ScoredStatement]:
    """Order by descending score, ties by statement id; optional boolean mask."""
    scores = np.asarray(scores, dtype=np.float64)
    idx = np.arange(len(ids)) if keep is None else np.flatnonzero(keep)
    ranks = id_ranks(ids) if ranks is None else ranks
    order = idx[np.lexsort((ranks[idx], -scores[idx]))][:k]
    return [ScoredStatement(ids[i], float(scores[i]), r) for r, i in enumerate(order.tolist(), start=1)]


def normalize_rows(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    norms = np.linalg.norm(m, axis=-1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0)


def embed_checked(embedder, texts: Sequence[str], dim: int | None = None) -> np.ndarray:
    try:
        out = np.asarray(embedder.embed(list(texts)), dtype=np.float64)
    except Exception as exc:  # embedders wrap remote calls; surface as one error type
        raise EmbedderFailure(str(exc)) from exc
    if out.ndim != 2 or out.shape[0] != len(texts):
        raise EmbedderFailure(f"embedder returned shape {out.shape} for {len(texts)} texts")
    if dim is not None and out.shape[1] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {out.shape[1]}")
    return out


class MemoryBackend:
    """A built, immutable index over one user's statements."""

    kind = "abstract"

    def __init__(self, statements: Sequence[Statement], k_default: int = DEFAULT_K):
        self.statements = tuple(statements)
        self.k_default = k_default
        self._by_id = {s.id: s for s in self.statements}
        self.ids = [s.id for s in self.statements]
        self.id_rank = id_ranks(self.ids)

    def text(self, statement_id: str) -> str:
        return self._by_id[statement_id].text

    def statement(self, statement_id: str) -> Statement:
        return self._by_id[statement_id]

    def search(self, query: str, k: int) -> list[ScoredStatement]:
        raise NotImplementedError

    def params(self) -> dict[str, Any]:
        return {}


def retrieve(backend: MemoryBackend | None, query: str, k: int | None = None) -> list[ScoredStatement]:
    if backend is None:
        raise BackendUnbuilt("no memory backend")
    k = backend.k_default if k is None else k
    if k < 0:
        raise ValueError("k must be >= 0")
    if k == 0:
        return []
    return backend.search(query, k)
