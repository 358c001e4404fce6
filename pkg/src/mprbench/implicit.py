"""Implicit-memory plumbing: SFT corpora, statement clustering, adapter routing.

Fine-tuning itself happens outside this package; the corpora exported here
feed an external LoRA trainer and the resulting adapters are addressed by
name on the serving endpoint.
"""
from __future__ import annotations

import json
import logging
import warnings
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .dataset import GenerationFailed, Statement, mentions
from .graph import SpecificGraph
from .memory.base import ScoredStatement, embed_checked
from .rng import stream

log = logging.getLogger(__name__)

MASK = "[MASK]"
MASK_PREAMBLE = (
    "The following statement about the user has one part replaced by [MASK]. "
    "Output the missing part only.\n"
    "Statement: "
)
ASK_PREAMBLE = "Answer the question about the user in one line.\nQuestion: "
SFT_HYPERPARAMS = {"method": "lora", "lora_rank": 8, "lora_alpha": 32, "epochs": [1, 10]}
CLUSTERS_SCHEMA = "mprbench.clusters/1"


class ImplicitError(Exception):
    pass


class SpanNotFound(ImplicitError):
    pass


class EmptyRetrieval(ImplicitError):
    pass


class UnregisteredCluster(ImplicitError):
    pass


class IoFailure(ImplicitError):
    pass


class DegenerateEmbeddings(UserWarning):
    pass


@dataclass(frozen=True)
class SftExample:
    input: str
    output: str
    source_statement: str
    scheme: str

    def to_dict(self) -> dict[str, str]:
        return asdict(self)


# --- corpora -----------------------------------------------------------------


def _spans(statement: Statement, graph: SpecificGraph) -> list[tuple[int, int]]:
    """Character spans of (source value, relation phrase, target value)."""
    edge = graph.edge(statement.edge_ref)
    text = statement.text
    src, tgt = graph.value(edge.source), graph.value(edge.target)
    i, j = text.find(src), text.find(tgt)
    if i < 0 or j < 0:
        raise SpanNotFound(f"{statement.id}: endpoint value not found verbatim in {text!r}")
    if i <= j < i + len(src) or j <= i < j + len(tgt):
        # overlapping matches (one value inside the other); look for a disjoint target
        j = text.find(tgt, i + len(src))
        if j < 0:
            raise SpanNotFound(f"{statement.id}: endpoint values overlap in {text!r}")
    a, b = sorted([(i, i + len(src)), (j, j + len(tgt))])
    spans = [(i, i + len(src)), (j, j + len(tgt))]
    lo, hi = a[1], b[0]
    mid = text[lo:hi]
    stripped = mid.strip()
    if stripped:
        start = lo + mid.index(stripped)
        spans.insert(1, (start, start + len(stripped)))
    return spans


def mask_example(statement: Statement, graph: SpecificGraph, seed: int) -> SftExample:
    if MASK in statement.text:
        raise SpanNotFound(f"{statement.id}: statement already contains {MASK}")
    spans = _spans(statement, graph)
    lo, hi = stream(seed, f"mask:{statement.id}").choice(spans)
    text = statement.text
    return SftExample(MASK_PREAMBLE + text[:lo] + MASK + text[hi:], text[lo:hi], statement.id, "mask")


def reconstruct(example: SftExample) -> str:
    """Inverse of masking: put the output back into the placeholder."""
    return example.input[len(MASK_PREAMBLE) :].replace(MASK, example.output, 1)


def build_mask_corpus(
    statements: Sequence[Statement], graph: SpecificGraph, seed: int = 0, skip_unmatched: bool = False
) -> list[SftExample]:
    """One single-placeholder example per statement.

    With ``skip_unmatched`` (meant for paraphrased statements) a statement whose
    values are not verbatim substrings is logged and dropped instead of raising.
    """
    out = []
    for st in statements:
        try:
            out.append(mask_example(st, graph, seed))
        except SpanNotFound as exc:
            if not skip_unmatched:
                raise
            log.warning("skipping mask example: %s", exc)
    return out


ASK_PROMPT = (
    "Write one question whose answer is \"{target}\", based on the statement below.\n"
    "Statement: {text}\n"
    "Requirements:\n"
    '1. The question must mention "{source}" and must not mention "{target}".\n'
    "2. Output only the question in one line, without any other descriptions."
)


def template_ask(statement: Statement, graph: SpecificGraph) -> tuple[str, str]:
    edge = graph.edge(statement.edge_ref)
    rel = graph.meta.relation(edge.space_id, edge.relation)
    source, target = graph.value(edge.source), graph.value(edge.target)
    question = rel.ask.format(x=source) if rel.ask else f"What is the {edge.relation} of {source}?"
    return question, target


def build_ask_corpus(statements: Sequence[Statement], graph: SpecificGraph, gen=None) -> list[SftExample]:
    """One QA pair per statement asking for the target given source and relation.

    ``gen`` may be an LLM text generator (anything with ``_ask(prompt, tag)``
    and ``retries``); otherwise the relation's template question is used.
    """
    out = []
    for st in statements:
        question, answer = template_ask(st, graph)
        if gen is not None and getattr(gen, "mode", "template") == "llm":
            source = graph.value(graph.edge(st.edge_ref).source)
            prompt = ASK_PROMPT.format(target=answer, text=st.text, source=source)
            for _ in range(gen.retries + 1):
                text = gen._ask(prompt, "ask")
                if text and mentions(text, source) and not mentions(text, answer):
                    question = text
                    break
            else:
                raise GenerationFailed(f"{st.id}: no valid question after {gen.retries + 1} attempts")
        out.append(SftExample(ASK_PREAMBLE + question, answer, st.id, "ask"))
    return out


def write_jsonl(examples: Iterable[SftExample], path: str | Path) -> int:
    n = 0
    try:
        with open(path, "w", encoding="utf-8") as fh:
            for ex in examples:
                fh.write(json.dumps(ex.to_dict(), ensure_ascii=False) + "\n")
                n += 1
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return n


def read_jsonl(path: str | Path) -> list[SftExample]:
    with open(path, encoding="utf-8") as fh:
        return [SftExample(**json.loads(line)) for line in fh if line.strip()]


# --- clustering ----------------------------------------------------------------


@dataclass
class ClusterAssignment:
    n_clusters: int
    centroids: np.ndarray
    assignment: dict[str, int]
    inertia: float
    inertia_history: list[float] = field(default_factory=list)
    iterations: int = 0
    converged: bool = True
    degenerate: bool = False

    def members(self, cluster: int) -> list[str]:
        return [sid for sid, c in self.assignment.items() if c == cluster]

    def sizes(self) -> list[int]:
        counts = Counter(self.assignment.values())
        return [counts.get(c, 0) for c in range(self.n_clusters)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": CLUSTERS_SCHEMA,
            "n_clusters": self.n_clusters,
            "inertia": self.inertia,
            "inertia_history": self.inertia_history,
            "iterations": self.iterations,
            "converged": self.converged,
            "degenerate": self.degenerate,
            "assignment": self.assignment,
            "centroids": self.centroids.tolist(),
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ClusterAssignment":
        return cls(
            n_clusters=raw["n_clusters"],
            centroids=np.asarray(raw["centroids"], dtype=np.float64),
            assignment={k: int(v) for k, v in raw["assignment"].items()},
            inertia=raw["inertia"],
            inertia_history=list(raw.get("inertia_history", [])),
            iterations=raw.get("iterations", 0),
            converged=raw.get("converged", True),
            degenerate=raw.get("degenerate", False),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "ClusterAssignment":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            rest = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(rest))
        chosen.append(idx)
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(axis=1))
    return X[chosen].copy()


def lloyd(X: np.ndarray, k: int, seed: int, max_iters: int = 100):
    """k-means++ seeding then Lloyd iterations; returns (labels, centroids, history, iters, converged)."""
    rng = np.random.default_rng(seed)
    C = kmeans_pp_init(X, k, rng)
    labels, dist = kernels.kmeans_assign(X, C)
    history = [float(dist.sum())]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        for c in range(k):
            mask = labels == c
            if mask.any():
                C[c] = X[mask].mean(axis=0)
            else:
                # reseat an empty cluster on the point farthest from its centroid
                far = int(np.argmax(dist))
                C[c] = X[far]
                dist[far] = 0.0
        new_labels, dist = kernels.kmeans_assign(X, C)
        history.append(float(dist.sum()))
        if np.array_equal(new_labels, labels):
            converged = True
            break
        labels = new_labels
    return labels, C, history, it, converged


def kmeans_cluster(
    statements: Sequence[Statement], embedder, n_clusters: int, seed: int = 0, max_iters: int = 100
) -> ClusterAssignment:
    if not 1 <= n_clusters <= len(statements):
        raise ValueError(f"n_clusters must be in [1, {len(statements)}], got {n_clusters}")
    ids = [s.id for s in statements]
    X = embed_checked(embedder, [s.text for s in statements])
    if n_clusters > 1 and np.all(X == X[0]):
        warnings.warn("all embeddings identical; assigning clusters round-robin", DegenerateEmbeddings, stacklevel=2)
        labels = np.arange(len(ids)) % n_clusters
        C = np.repeat(X[:1], n_clusters, axis=0)
        return ClusterAssignment(n_clusters, C, dict(zip(ids, labels.tolist())), 0.0, [0.0], 0, True, True)
    labels, C, history, iters, converged = lloyd(X, n_clusters, seed, max_iters)
    return ClusterAssignment(
        n_clusters, C, dict(zip(ids, labels.tolist())), history[-1], history, iters, converged
    )


def export_cluster_corpora(
    assignment: ClusterAssignment,
    statements: Sequence[Statement],
    graph: SpecificGraph,
    scheme: str,
    out_dir: str | Path,
    seed: int = 0,
) -> dict[str, Any]:
    if scheme not in ("mask", "ask"):
        raise ValueError(f"unknown scheme {scheme!r}")
    missing = [s.id for s in statements if s.id not in assignment.assignment]
    if missing:
        raise ValueError(f"statements without a cluster: {missing[:5]}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    by_cluster: dict[int, list[Statement]] = defaultdict(list)
    for st in statements:
        by_cluster[assignment.assignment[st.id]].append(st)
    files = []
    for c in range(assignment.n_clusters):
        members = by_cluster.get(c, [])
        examples = build_mask_corpus(members, graph, seed) if scheme == "mask" else build_ask_corpus(members, graph)
        name = f"cluster_{c:03d}.jsonl"
        count = write_jsonl(examples, out / name)
        files.append({"file": name, "cluster": c, "statements": count})
    manifest = {"scheme": scheme, "n_clusters": assignment.n_clusters, "sft": SFT_HYPERPARAMS, "files": files}
    try:
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return manifest


# --- routing -----------------------------------------------------------------


@dataclass(frozen=True)
class AdapterRegistry:
    entries: Mapping[int, str]
    base_model: str

    def __post_init__(self) -> None:
        names = list(self.entries.values())
        if len(set(names)) != len(names):
            raise ValueError("adapter names must be unique")

    @classmethod
    def for_clusters(cls, n_clusters: int, base_model: str, prefix: str = "adapter") -> "AdapterRegistry":
        return cls({c: f"{prefix}-c{c:03d}" for c in range(n_clusters)}, base_model)

    def check_total(self, n_clusters: int) -> None:
        missing = sorted(set(range(n_clusters)) - set(self.entries))
        if missing:
            raise UnregisteredCluster(f"no adapter for clusters {missing}")

    def save(self, path: str | Path) -> None:
        raw = {"base_model": self.base_model, "entries": {str(c): n for c, n in sorted(self.entries.items())}}
        Path(path).write_text(json.dumps(raw, indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AdapterRegistry":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls({int(c): n for c, n in raw["entries"].items()}, raw["base_model"])


@dataclass(frozen=True)
class Route:
    model: str
    cluster: int | None
    votes: Mapping[int, int]
    fallback: bool = False


def vote(retrieved: Sequence[ScoredStatement], assignment: ClusterAssignment) -> tuple[int, dict[int, int]]:
    if not retrieved:
        raise EmptyRetrieval("nothing retrieved to vote with")
    counts: Counter[int] = Counter()
    mass: defaultdict[int, float] = defaultdict(float)
    for r in retrieved:
        try:
            c = assignment.assignment[r.statement_id]
        except KeyError:
            raise ValueError(f"statement {r.statement_id} has no cluster") from None
        counts[c] += 1
        mass[c] += r.score
    winner = min(counts, key=lambda c: (-counts[c], -mass[c], c))
    return winner, dict(counts)


def route(retrieved: Sequence[ScoredStatement], assignment: ClusterAssignment, registry: AdapterRegistry) -> Route:
    """Majority vote over clusters; empty retrieval falls back to the base model."""
    try:
        winner, counts = vote(retrieved, assignment)
    except EmptyRetrieval:
        return Route(registry.base_model, None, {}, fallback=True)
    if winner not in registry.entries:
        raise UnregisteredCluster(f"cluster {winner} has no adapter")
    return Route(registry.entries[winner], winner, counts)


def select_adapter(retrieved: Sequence[ScoredStatement], assignment: ClusterAssignment, registry: AdapterRegistry) -> str:
    return route(retrieved, assignment, registry).model
