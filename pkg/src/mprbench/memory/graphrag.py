"""Entity/relation knowledge graph linked back to source statements."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from ..dataset import Statement
from .base import (
    EmptyCorpus,
    ExtractorFailure,
    MemoryBackend,
    ScoredStatement,
    embed_checked,
    normalize_rows,
    rank_scores,
)

DEFAULT_THRESHOLD = 0.5


@dataclass(frozen=True)
class KGNode:
    id: int
    kind: str  # "entity" or "relation"
    text: str
    statements: tuple[str, ...]


def norm_key(text: str) -> str:
    return " ".join(text.casefold().split())


class MetadataExtractor:
    """Reads entities/relations straight off the generator's graph edges."""

    def __init__(self, graph):
        self.graph = graph

    def __call__(self, statement: Statement) -> tuple[list[str], list[str]]:
        edge = self.graph.edge(statement.edge_ref)
        return [self.graph.value(edge.source), self.graph.value(edge.target)], [edge.relation]


EXTRACT_PROMPT = (
    "Extract the entities and the relations mentioned in the statement below.\n"
    "Statement: {text}\n"
    'Answer with one JSON object of the form {{"entities": [...], "relations": [...]}} and nothing else.'
)


class LlmExtractor:
    def __init__(self, provider, model: str = "default"):
        self.provider = provider
        self.model = model

    def __call__(self, statement: Statement) -> tuple[list[str], list[str]]:
        from ..providers import CompletionRequest

        req = CompletionRequest(
            self.model, (("user", EXTRACT_PROMPT.format(text=statement.text)),), metadata={"step": "extract"}
        )
        text = self.provider.complete(req).text
        m = re.search(r"\{.*\}", text, re.S)
        if m is None:
            raise ExtractorFailure(f"no JSON object in extractor reply for {statement.id}")
        try:
            raw = json.loads(m.group(0))
        except json.JSONDecodeError as exc:
            raise ExtractorFailure(f"bad JSON for {statement.id}: {exc}") from exc
        return [str(e) for e in raw.get("entities", [])], [str(r) for r in raw.get("relations", [])]


class GraphBackend(MemoryBackend):
    kind = "graph"

    def __init__(
        self,
        statements: Sequence[Statement],
        extractor=None,
        embedder=None,
        threshold: float = DEFAULT_THRESHOLD,
        kg_nodes: Sequence[KGNode] | None = None,
        triples: Sequence[tuple[int, int, int, str]] | None = None,
        vectors: np.ndarray | None = None,
        **kw: Any,
    ):
        if not statements:
            raise EmptyCorpus("graph index needs at least one statement")
        super().__init__(statements, **kw)
        self.embedder = embedder
        self.threshold = threshold
        if kg_nodes is None:
            kg_nodes, triples = self._extract(extractor)
            vectors = embed_checked(embedder, [n.text for n in kg_nodes])
        self.kg_nodes = tuple(kg_nodes)
        self.triples = tuple(tuple(t) for t in (triples or ()))
        self.raw_vectors = np.asarray(vectors, dtype=np.float64)
        self.vectors = normalize_rows(self.raw_vectors)
        self.dim = self.vectors.shape[1]
        # statement x kg-node incidence for score aggregation
        index = {sid: i for i, sid in enumerate(self.ids)}
        self.incidence = np.zeros((len(self.ids), len(self.kg_nodes)), dtype=np.float64)
        for node in self.kg_nodes:
            for sid in node.statements:
                self.incidence[index[sid], node.id] = 1.0

    def _extract(self, extractor):
        keyed: dict[tuple[str, str], dict[str, Any]] = {}
        triples = []

        def node_for(kind: str, text: str, sid: str) -> int:
            key = (kind, norm_key(text))
            slot = keyed.setdefault(key, {"id": len(keyed), "text": text.strip(), "statements": []})
            if sid not in slot["statements"]:
                slot["statements"].append(sid)
            return slot["id"]

        for st in self.statements:
            try:
                entities, relations = extractor(st)
            except ExtractorFailure:
                raise
            except Exception as exc:
                raise ExtractorFailure(f"{st.id}: {exc}") from exc
            entities = [e for e in entities if norm_key(e)]
            relations = [r for r in relations if norm_key(r)]
            if not entities and not relations:
                raise ExtractorFailure(f"nothing extracted from {st.id}")
            ent_ids = [node_for("entity", e, st.id) for e in entities]
            rel_ids = [node_for("relation", r, st.id) for r in relations]
            if len(ent_ids) >= 2:
                for r in rel_ids:
                    triples.append((ent_ids[0], r, ent_ids[1], st.id))
        nodes = [
            KGNode(v["id"], kind, v["text"], tuple(v["statements"]))
            for (kind, _), v in sorted(keyed.items(), key=lambda kv: kv[1]["id"])
        ]
        return nodes, triples

    def node_scores(self, query: str) -> np.ndarray:
        q = normalize_rows(embed_checked(self.embedder, [query], self.dim))[0]
        return self.vectors @ q

    def search(self, query: str, k: int) -> list[ScoredStatement]:
        sims = self.node_scores(query)
        matched = np.where(sims >= self.threshold, sims, 0.0)
        scores = self.incidence @ matched
        return rank_scores(self.ids, scores, k, keep=scores > 0, ranks=self.id_rank)

    def params(self) -> dict[str, Any]:
        return {"threshold": self.threshold}


def build_graph(statements: Sequence[Statement], extractor, embedder, threshold: float = DEFAULT_THRESHOLD) -> GraphBackend:
    return GraphBackend(statements, extractor, embedder, threshold=threshold)
