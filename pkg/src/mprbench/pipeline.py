"""Assemble backends and memory views from names, for the CLI and the harness."""
from __future__ import annotations

from pathlib import Path
from typing import Any, Callable

from .dataset import SubDataset
from .implicit import AdapterRegistry, ClusterAssignment
from .memory import (
    KINDS,
    ConcatSummarizer,
    LlmExtractor,
    LlmSummarizer,
    MemoryBackend,
    MetadataExtractor,
    build_dense,
    build_graph,
    build_ignoramus,
    build_oracle,
    build_sparse,
    build_tree,
)
from .reasoning import ConfigInvalid, MemoryView


def build_backend(
    kind: str,
    sd: SubDataset,
    embedder=None,
    provider=None,
    model: str = "default",
    summarizer: str = "concat",
    extractor: str = "metadata",
    graph_threshold: float = 0.5,
) -> MemoryBackend:
    st = sd.statements
    if kind == "sparse":
        return build_sparse(st)
    if kind == "dense":
        return build_dense(st, embedder)
    if kind == "tree":
        summ = ConcatSummarizer() if summarizer == "concat" else LlmSummarizer(provider, model)
        return build_tree(st, summ, embedder)
    if kind == "graph":
        if extractor == "metadata":
            if sd.graph is None:
                raise ConfigInvalid("the metadata extractor needs the bundle's graphs")
            ext: Any = MetadataExtractor(sd.graph)
        else:
            ext = LlmExtractor(provider, model)
        return build_graph(st, ext, embedder, threshold=graph_threshold)
    if kind == "oracle":
        return build_oracle(st)
    if kind == "ignoramus":
        return build_ignoramus(st)
    raise ConfigInvalid(f"unknown memory kind {kind!r}; expected one of {KINDS}")


def hybrid_paths(root: str | Path, user_id: str) -> tuple[Path, Path]:
    base = Path(root) / user_id
    return base / "clusters.json", base / "adapters.json"


def memory_factory(
    kind: str,
    k: int | None = None,
    model: str = "default",
    hybrid_dir: str | Path | None = None,
    **build_kw: Any,
) -> Callable[[SubDataset], MemoryView]:
    def make(sd: SubDataset) -> MemoryView:
        backend = build_backend(kind, sd, model=model, **build_kw)
        if hybrid_dir is None:
            return MemoryView(backend, k, model)
        clusters, adapters = hybrid_paths(hybrid_dir, sd.user_id)
        assignment = ClusterAssignment.load(clusters)
        registry = AdapterRegistry.load(adapters)
        registry.check_total(assignment.n_clusters)
        return MemoryView(backend, k, model, assignment, registry)

    return make
