"""Hierarchical summary tree; statements are leaves, parents summarise children."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from ..dataset import Statement
from .base import (
    EmptyCorpus,
    MemoryBackend,
    ScoredStatement,
    SummarizerFailure,
    embed_checked,
    normalize_rows,
)

DEFAULT_FANOUT = 8


@dataclass(frozen=True)
class TreeNode:
    id: int
    text: str
    children: tuple[int, ...] = ()
    statement_id: str | None = None

    @property
    def is_leaf(self) -> bool:
        return not self.children


class ConcatSummarizer:
    """Joins child texts with a space; deterministic stand-in for an LLM."""

    def __call__(self, texts: Sequence[str]) -> str:
        return " ".join(texts)


SUMMARY_PROMPT = (
    "Summarize the following user statements in one short paragraph, keeping every person, "
    "organization, place and value that they mention.\n"
    "Statements:\n{texts}\n"
    "Output only the summary."
)


class LlmSummarizer:
    def __init__(self, provider, model: str = "default"):
        self.provider = provider
        self.model = model

    def __call__(self, texts: Sequence[str]) -> str:
        from ..providers import CompletionRequest

        prompt = SUMMARY_PROMPT.format(texts="\n".join(texts))
        req = CompletionRequest(self.model, (("user", prompt),), metadata={"step": "summarize"})
        return self.provider.complete(req).text.strip()


def principal_order(vectors: np.ndarray) -> list[int]:
    """Indices sorted along the top principal direction (sign-fixed, index tie-break)."""
    n = vectors.shape[0]
    if n < 2:
        return list(range(n))
    centered = vectors - vectors.mean(axis=0)
    if not np.any(centered):
        return list(range(n))
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    axis = vt[0]
    if axis[np.argmax(np.abs(axis))] < 0:
        axis = -axis
    proj = np.round(centered @ axis, 12)
    return sorted(range(n), key=lambda i: (proj[i], i))


class TreeBackend(MemoryBackend):
    kind = "tree"

    def __init__(
        self,
        statements: Sequence[Statement],
        summarizer: Callable[[Sequence[str]], str],
        embedder,
        fanout: int = DEFAULT_FANOUT,
        nodes: Sequence[TreeNode] | None = None,
        vectors: np.ndarray | None = None,
        **kw: Any,
    ):
        if not statements:
            raise EmptyCorpus("tree index needs at least one statement")
        if fanout < 2:
            raise ValueError("fanout must be >= 2")
        super().__init__(statements, **kw)
        self.embedder = embedder
        self.fanout = fanout
        if nodes is None:
            nodes, vectors = self._build(summarizer)
        self.nodes = tuple(nodes)
        self.raw_vectors = np.asarray(vectors, dtype=np.float64)
        self.vectors = normalize_rows(self.raw_vectors)
        self.dim = self.vectors.shape[1]
        self.root = len(self.nodes) - 1
        self._leaves: dict[int, tuple[int, ...]] = {}
        for node in self.nodes:
            if node.is_leaf:
                self._leaves[node.id] = (node.id,)
            else:
                self._leaves[node.id] = tuple(l for c in node.children for l in self._leaves[c])

    def _build(self, summarizer) -> tuple[list[TreeNode], np.ndarray]:
        nodes = [TreeNode(i, s.text, (), s.id) for i, s in enumerate(self.statements)]
        vecs = [normalize_rows(embed_checked(self.embedder, [s.text for s in self.statements]))]
        level = list(range(len(nodes)))
        level_vecs = vecs[0]
        while len(level) > 1:
            order = principal_order(level_vecs)
            groups = [[level[i] for i in order[j : j + self.fanout]] for j in range(0, len(order), self.fanout)]
            texts = []
            for group in groups:
                try:
                    summary = summarizer([nodes[c].text for c in group])
                except Exception as exc:
                    raise SummarizerFailure(str(exc)) from exc
                if not isinstance(summary, str):
                    raise SummarizerFailure("summarizer returned a non-text value")
                texts.append(summary)
            level_vecs = normalize_rows(embed_checked(self.embedder, texts, vecs[0].shape[1]))
            level = []
            for group, text in zip(groups, texts):
                node = TreeNode(len(nodes), text, tuple(group))
                nodes.append(node)
                level.append(node.id)
            vecs.append(level_vecs)
        return nodes, np.vstack(vecs)

    def leaves(self, node_id: int) -> tuple[int, ...]:
        return self._leaves[node_id]

    def descend(self, q: np.ndarray) -> list[int]:
        path = [self.root]
        node = self.nodes[self.root]
        while not node.is_leaf:
            sims = self.vectors[list(node.children)] @ q
            node = self.nodes[node.children[int(np.argmax(sims))]]
            path.append(node.id)
        return path

    def search(self, query: str, k: int) -> list[ScoredStatement]:
        q = normalize_rows(embed_checked(self.embedder, [query], self.dim))[0]
        path = self.descend(q)
        taken: set[int] = set()
        out: list[ScoredStatement] = []
        # Leaves under the deepest chosen node first, then widen one ancestor at a time.
        for tier in range(len(path) - 1, -1, -1):
            fresh = [l for l in self.leaves(path[tier]) if l not in taken]
            sims = self.vectors[fresh] @ q if fresh else np.zeros(0)
            ranked = sorted(zip(fresh, sims.tolist()), key=lambda p: (-p[1], self.nodes[p[0]].statement_id))
            for leaf, sim in ranked:
                if len(out) == k:
                    return out
                taken.add(leaf)
                out.append(ScoredStatement(self.nodes[leaf].statement_id, 2.0 * tier + sim, len(out) + 1))
        return out

    def params(self) -> dict[str, Any]:
        return {"fanout": self.fanout}


def build_tree(statements: Sequence[Statement], summarizer, embedder, fanout: int = DEFAULT_FANOUT) -> TreeBackend:
    return TreeBackend(statements, summarizer, embedder, fanout=fanout)
