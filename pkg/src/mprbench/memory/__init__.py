"""Explicit memory: retrieval indices over a user's statements."""
from .base import (
    DEFAULT_K,
    BackendUnbuilt,
    DimensionMismatch,
    EmbedderFailure,
    EmptyCorpus,
    ExtractorFailure,
    MemoryBackend,
    MemoryIndexError,
    MissingReference,
    ScoredStatement,
    SummarizerFailure,
    retrieve,
    tokenize,
)
from .baselines import IgnoramusBackend, OracleBackend, build_ignoramus, build_oracle, oracle_retrieve
from .dense import DenseBackend, build_dense
from .graphrag import GraphBackend, LlmExtractor, MetadataExtractor, build_graph
from .sparse import SparseBackend, build_sparse
from .store import IndexMismatch, load_backend, save_backend
from .tree import ConcatSummarizer, LlmSummarizer, TreeBackend, build_tree

KINDS = ("sparse", "dense", "tree", "graph", "oracle", "ignoramus")

__all__ = [
    "DEFAULT_K", "KINDS", "BackendUnbuilt", "ConcatSummarizer", "DenseBackend", "DimensionMismatch",
    "EmbedderFailure", "EmptyCorpus", "ExtractorFailure", "GraphBackend", "IgnoramusBackend", "IndexMismatch",
    "LlmExtractor", "LlmSummarizer", "MemoryBackend", "MemoryIndexError", "MetadataExtractor", "MissingReference",
    "OracleBackend", "ScoredStatement", "SparseBackend", "SummarizerFailure", "TreeBackend", "build_dense",
    "build_graph", "build_ignoramus", "build_oracle", "build_sparse", "build_tree", "load_backend",
    "oracle_retrieve", "retrieve", "save_backend", "tokenize",
]
