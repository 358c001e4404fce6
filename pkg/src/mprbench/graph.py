"""Meta graphs, per-user specific graphs and reasoning-path sampling.

A :class:`MetaGraph` describes the sampling space (node spaces with value
pools, edge spaces with relation pools).  :func:`instantiate_graph` draws one
user world from it, :func:`sample_path` walks that world to produce a
disambiguated multi-hop path and :func:`resolve_answer` is the brute-force
oracle that replays a path against the whole graph.
"""
from __future__ import annotations

import datetime as _dt
import json
import operator
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping

from .rng import stable_hash, stream

ENTITY = "entity"
ATTRIBUTE = "attribute"
NODE_KINDS = (ENTITY, ATTRIBUTE)

ENTITY_ORIENTED = "entity-oriented"
ATTRIBUTE_ORIENTED = "attribute-oriented"
VALUE_ORIENTED = "value-oriented"
EDGE_CATEGORIES = (ENTITY_ORIENTED, ATTRIBUTE_ORIENTED, VALUE_ORIENTED)
PERSONALIZED = (ENTITY_ORIENTED, ATTRIBUTE_ORIENTED)

GRAPH_SCHEMA = "mprbench.graph/1"


class GraphError(Exception):
    pass


class InvalidMetaGraph(GraphError):
    pass


class EmptyPool(GraphError):
    pass


class ScaleInfeasible(GraphError):
    pass


class UnknownEdge(GraphError):
    pass


class PathExhausted(GraphError):
    pass


class HopsTooSmall(GraphError):
    pass


class DanglingPath(GraphError):
    pass


_NUMBER_RE = re.compile(r"^\s*(-?\d+(?:\.\d+)?)")


def numeric_value(value: str, value_type: str) -> float:
    """Comparable scalar for number and date attribute values."""
    if value_type == "date":
        return float(_dt.date.fromisoformat(value.strip()).toordinal())
    m = _NUMBER_RE.match(value)
    if m is None:
        raise ValueError(f"not a numeric value: {value!r}")
    return float(m.group(1))


COMPARATORS: dict[str, Callable[[float, float], bool]] = {
    "greater than": operator.gt,
    "less than": operator.lt,
    "same as": operator.eq,
}


@dataclass(frozen=True)
class Relation:
    """A relation label plus the phrasing used by the template text backend.

    Template slots: ``{source}``/``{target}`` in ``statement``; ``{x}`` in
    ``forward`` (noun phrase for the target given the source phrase),
    ``clause`` (relative clause describing a source that points at ``x``)
    and ``ask`` (a full question whose answer is the target of ``x``).
    """

    label: str
    statement: str | None = None
    forward: str | None = None
    clause: str | None = None
    ask: str | None = None

    @classmethod
    def from_config(cls, raw: str | Mapping[str, Any]) -> "Relation":
        if isinstance(raw, str):
            return cls(label=raw)
        return cls(
            label=raw["label"],
            statement=raw.get("statement"),
            forward=raw.get("forward"),
            clause=raw.get("clause"),
            ask=raw.get("ask"),
        )

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"label": self.label}
        for key in ("statement", "forward", "clause", "ask"):
            value = getattr(self, key)
            if value is not None:
                out[key] = value
        return out


def _expand_generator(desc: Mapping[str, Any]) -> list[str]:
    kind = desc.get("type")
    if kind == "names":
        return [f"{f} {l}" for l in desc["last"] for f in desc["first"]]
    if kind == "integer":
        step = int(desc.get("step", 1))
        unit = desc.get("unit")
        values = range(int(desc["min"]), int(desc["max"]) + 1, step)
        return [f"{v} ({unit})" if unit else str(v) for v in values]
    if kind == "date":
        start = _dt.date.fromisoformat(desc["start"])
        end = _dt.date.fromisoformat(desc["end"])
        step = _dt.timedelta(days=int(desc.get("step_days", 1)))
        out = []
        day = start
        while day <= end:
            out.append(day.isoformat())
            day += step
        return out
    raise InvalidMetaGraph(f"unknown generator type {kind!r}")


@dataclass(frozen=True)
class NodeSpace:
    id: str
    kind: str
    noun: str
    pool: tuple[str, ...] = ()
    generator: Mapping[str, Any] | None = None
    value_type: str = "text"
    count: int | None = None
    unique: bool | None = None

    def values(self) -> list[str]:
        if self.generator is not None:
            return _expand_generator(self.generator)
        return list(self.pool)

    @property
    def draws_unique(self) -> bool:
        # Attribute values repeat by default so that ambiguity can exist.
        return self.kind == ENTITY if self.unique is None else self.unique

    def to_config(self) -> dict[str, Any]:
        out: dict[str, Any] = {"id": self.id, "kind": self.kind, "noun": self.noun}
        if self.generator is not None:
            out["generator"] = dict(self.generator)
        else:
            out["pool"] = list(self.pool)
        if self.value_type != "text":
            out["value_type"] = self.value_type
        if self.count is not None:
            out["count"] = self.count
        if self.unique is not None:
            out["unique"] = self.unique
        return out


@dataclass(frozen=True)
class EdgeSpace:
    id: str
    endpoints: tuple[str, str]
    category: str
    relations: tuple[Relation, ...]

    def to_config(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "endpoints": list(self.endpoints),
            "category": self.category,
            "relations": [r.to_config() for r in self.relations],
        }


def _expected_category(kinds: tuple[str, str]) -> str:
    if kinds == (ENTITY, ENTITY):
        return ENTITY_ORIENTED
    if kinds == (ATTRIBUTE, ATTRIBUTE):
        return VALUE_ORIENTED
    return ATTRIBUTE_ORIENTED


@dataclass(frozen=True)
class MetaGraph:
    node_spaces: tuple[NodeSpace, ...]
    edge_spaces: tuple[EdgeSpace, ...] = ()

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        ids = [s.id for s in self.node_spaces]
        if len(set(ids)) != len(ids):
            raise InvalidMetaGraph("duplicate node space id")
        spaces = {s.id: s for s in self.node_spaces}
        for s in self.node_spaces:
            if s.kind not in NODE_KINDS:
                raise InvalidMetaGraph(f"node space {s.id}: bad kind {s.kind!r}")
            if s.value_type not in ("text", "number", "date"):
                raise InvalidMetaGraph(f"node space {s.id}: bad value_type")
        edge_ids = [e.id for e in self.edge_spaces]
        if len(set(edge_ids)) != len(edge_ids):
            raise InvalidMetaGraph("duplicate edge space id")
        for e in self.edge_spaces:
            for end in e.endpoints:
                if end not in spaces:
                    raise InvalidMetaGraph(f"edge space {e.id}: unknown node space {end!r}")
            kinds = (spaces[e.endpoints[0]].kind, spaces[e.endpoints[1]].kind)
            if e.category not in EDGE_CATEGORIES or e.category != _expected_category(kinds):
                raise InvalidMetaGraph(
                    f"edge space {e.id}: category {e.category!r} does not fit endpoints {kinds}"
                )
            if not e.relations:
                raise EmptyPool(f"edge space {e.id} has an empty relation pool")
            if e.category == VALUE_ORIENTED:
                for r in e.relations:
                    if r.label not in COMPARATORS:
                        raise InvalidMetaGraph(
                            f"edge space {e.id}: value relation {r.label!r} is not a comparator"
                        )
                for end in e.endpoints:
                    if spaces[end].value_type == "text":
                        raise InvalidMetaGraph(f"edge space {e.id}: comparing text values")

    def space(self, space_id: str) -> NodeSpace:
        for s in self.node_spaces:
            if s.id == space_id:
                return s
        raise KeyError(space_id)

    def edge_space(self, space_id: str) -> EdgeSpace:
        for e in self.edge_spaces:
            if e.id == space_id:
                return e
        raise KeyError(space_id)

    def relation(self, space_id: str, label: str) -> Relation:
        for r in self.edge_space(space_id).relations:
            if r.label == label:
                return r
        raise KeyError((space_id, label))

    def to_config(self) -> dict[str, Any]:
        return {
            "node_spaces": [s.to_config() for s in self.node_spaces],
            "edge_spaces": [e.to_config() for e in self.edge_spaces],
        }

    @classmethod
    def from_config(cls, raw: Mapping[str, Any], base_dir: Path | None = None) -> "MetaGraph":
        node_spaces = []
        for s in raw.get("node_spaces", []):
            pool = s.get("pool", ())
            if isinstance(pool, Mapping) and "file" in pool:
                path = Path(pool["file"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                pool = [ln.strip() for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]
            node_spaces.append(
                NodeSpace(
                    id=s["id"],
                    kind=s["kind"],
                    noun=s.get("noun", s["id"].replace("_", " ")),
                    pool=tuple(pool),
                    generator=s.get("generator"),
                    value_type=s.get("value_type", "text"),
                    count=s.get("count"),
                    unique=s.get("unique"),
                )
            )
        edge_spaces = [
            EdgeSpace(
                id=e["id"],
                endpoints=(e["endpoints"][0], e["endpoints"][1]),
                category=e["category"],
                relations=tuple(Relation.from_config(r) for r in e.get("relations", [])),
            )
            for e in raw.get("edge_spaces", [])
        ]
        return cls(node_spaces=tuple(node_spaces), edge_spaces=tuple(edge_spaces))

    def config_hash(self) -> str:
        return stable_hash(json.dumps(self.to_config(), sort_keys=True))


def load_meta(path: str | Path) -> MetaGraph:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix in (".yaml", ".yml"):
        import yaml

        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    return MetaGraph.from_config(raw, base_dir=path.parent)


@dataclass(frozen=True)
class GraphScaleConfig:
    """Node counts per node space and edge counts per edge space.

    Spaces missing from ``nodes`` use the space's ``count`` (or the full pool
    for list pools).  Edge spaces missing from ``edges`` get
    ``round(density * slots)`` edges, where a slot is one
    ``(source node, relation)`` pair.
    """

    nodes: Mapping[str, int] = field(default_factory=dict)
    edges: Mapping[str, int] = field(default_factory=dict)
    density: float = 0.5

    def to_config(self) -> dict[str, Any]:
        return {"nodes": dict(self.nodes), "edges": dict(self.edges), "density": self.density}

    @classmethod
    def from_config(cls, raw: Mapping[str, Any]) -> "GraphScaleConfig":
        return cls(
            nodes=dict(raw.get("nodes", {})),
            edges=dict(raw.get("edges", {})),
            density=float(raw.get("density", 0.5)),
        )


@dataclass(frozen=True)
class Node:
    id: str
    space_id: str
    value: str


@dataclass(frozen=True)
class Edge:
    id: str
    space_id: str
    source: str
    target: str
    relation: str
    category: str


class SpecificGraph:
    """One instantiated user world.  Immutable after construction."""

    def __init__(
        self,
        meta: MetaGraph,
        nodes: Iterable[Node],
        edges: Iterable[Edge],
        manifest: Mapping[str, Any] | None = None,
    ) -> None:
        self.meta = meta
        self.nodes: tuple[Node, ...] = tuple(nodes)
        self.edges: tuple[Edge, ...] = tuple(edges)
        self.manifest = dict(manifest or {})
        self._node = {n.id: n for n in self.nodes}
        self._edge = {e.id: e for e in self.edges}
        if len(self._node) != len(self.nodes) or len(self._edge) != len(self.edges):
            raise GraphError("duplicate node or edge id")
        self._kind = {s.id: s.kind for s in meta.node_spaces}
        out_edges: dict[str, list[Edge]] = defaultdict(list)
        in_edges: dict[str, list[Edge]] = defaultdict(list)
        for e in self.edges:
            if e.source not in self._node or e.target not in self._node:
                raise GraphError(f"edge {e.id} references a missing node")
            out_edges[e.source].append(e)
            in_edges[e.target].append(e)
        self.adjacency = {k: tuple(v) for k, v in out_edges.items()}
        self._in = {k: tuple(v) for k, v in in_edges.items()}
        by_value: dict[tuple[str, str], list[str]] = defaultdict(list)
        for n in self.nodes:
            by_value[(n.space_id, n.value)].append(n.id)
        self._by_value = {k: tuple(v) for k, v in by_value.items()}
        # (edge space, relation, forward) -> {from node: [to nodes]}
        hops: dict[tuple[str, str, bool], dict[str, list[str]]] = defaultdict(lambda: defaultdict(list))
        for e in self.edges:
            hops[(e.space_id, e.relation, True)][e.source].append(e.target)
            hops[(e.space_id, e.relation, False)][e.target].append(e.source)
        self._hops = {k: {n: tuple(t) for n, t in v.items()} for k, v in hops.items()}
        self._space_nodes: dict[str, tuple[str, ...]] = {}
        grouped: dict[str, list[str]] = defaultdict(list)
        for n in self.nodes:
            grouped[n.space_id].append(n.id)
        self._space_nodes = {k: tuple(v) for k, v in grouped.items()}

    def node(self, node_id: str) -> Node:
        return self._node[node_id]

    def edge(self, edge_id: str) -> Edge:
        try:
            return self._edge[edge_id]
        except KeyError:
            raise UnknownEdge(edge_id) from None

    def has_edge(self, edge_id: str) -> bool:
        return edge_id in self._edge

    def kind(self, node_id: str) -> str:
        return self._kind[self._node[node_id].space_id]

    def value(self, node_id: str) -> str:
        return self._node[node_id].value

    def out_edges(self, node_id: str) -> tuple[Edge, ...]:
        return self.adjacency.get(node_id, ())

    def in_edges(self, node_id: str) -> tuple[Edge, ...]:
        return self._in.get(node_id, ())

    def same_value(self, node_id: str) -> tuple[str, ...]:
        n = self._node[node_id]
        return self._by_value[(n.space_id, n.value)]

    def space_nodes(self, space_id: str) -> tuple[str, ...]:
        return self._space_nodes.get(space_id, ())

    def neighbours(self, space_id: str, relation: str, forward: bool, node_id: str) -> tuple[str, ...]:
        return self._hops.get((space_id, relation, forward), {}).get(node_id, ())

    def entity_end(self, edge: Edge) -> tuple[str, str]:
        """``(entity node, attribute node)`` of an attribute-oriented edge."""
        if self.kind(edge.source) == ENTITY:
            return edge.source, edge.target
        return edge.target, edge.source

    def endpoints(self, edge: Edge, forward: bool) -> tuple[str, str]:
        return (edge.source, edge.target) if forward else (edge.target, edge.source)

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema": GRAPH_SCHEMA,
            "manifest": self.manifest,
            "meta": self.meta.to_config(),
            "nodes": [[n.id, n.space_id, n.value] for n in self.nodes],
            "edges": [[e.id, e.space_id, e.source, e.target, e.relation, e.category] for e in self.edges],
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "SpecificGraph":
        if raw.get("schema") != GRAPH_SCHEMA:
            raise GraphError(f"unsupported graph schema {raw.get('schema')!r}")
        meta = MetaGraph.from_config(raw["meta"])
        return cls(
            meta,
            (Node(*n) for n in raw["nodes"]),
            (Edge(*e) for e in raw["edges"]),
            raw.get("manifest"),
        )


def save_graph(graph: SpecificGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(graph.to_dict(), ensure_ascii=False), encoding="utf-8")


def load_graph(path: str | Path) -> SpecificGraph:
    return SpecificGraph.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _node_count(space: NodeSpace, scale: GraphScaleConfig, n_values: int) -> int:
    if space.id in scale.nodes:
        return int(scale.nodes[space.id])
    if space.count is not None:
        return space.count
    return n_values if space.generator is None else min(n_values, 10)


def instantiate_graph(meta: MetaGraph, seed: int, scale: GraphScaleConfig | None = None) -> SpecificGraph:
    """Draw one user world from ``meta``.  Deterministic in (meta, seed, scale)."""
    scale = scale or GraphScaleConfig()
    nodes: list[Node] = []
    by_space: dict[str, list[Node]] = {}
    for space in meta.node_spaces:
        values = space.values()
        if not values:
            raise EmptyPool(f"node space {space.id} has no candidate values")
        count = _node_count(space, scale, len(values))
        rng = stream(seed, f"nodes:{space.id}")
        if space.draws_unique:
            if count > len(values):
                raise ScaleInfeasible(
                    f"node space {space.id}: {count} distinct values requested, pool has {len(values)}"
                )
            drawn = rng.sample(values, count)
        else:
            drawn = [rng.choice(values) for _ in range(count)]
        space_nodes = []
        for value in drawn:
            node = Node(f"n{len(nodes)}", space.id, value)
            nodes.append(node)
            space_nodes.append(node)
        by_space[space.id] = space_nodes

    edges: list[Edge] = []
    for es in meta.edge_spaces:
        sources = by_space[es.endpoints[0]]
        targets = by_space[es.endpoints[1]]
        rng = stream(seed, f"edges:{es.id}")
        if es.category == VALUE_ORIENTED:
            vt_s = meta.space(es.endpoints[0]).value_type
            vt_t = meta.space(es.endpoints[1]).value_type
            tvals = [(t, numeric_value(t.value, vt_t)) for t in targets]
            slots = []
            for s in sources:
                sv = numeric_value(s.value, vt_s)
                for rel in es.relations:
                    cmp = COMPARATORS[rel.label]
                    # Comparisons are not functional: one slot per satisfying pair.
                    slots.extend((s, rel, [t]) for t, tv in tvals if t.id != s.id and cmp(sv, tv))
        else:
            slots = []
            for s in sources:
                ok = [t for t in targets if t.id != s.id]
                for rel in es.relations:
                    slots.append((s, rel, ok))
        n_edges = int(es_count) if (es_count := scale.edges.get(es.id)) is not None else round(
            scale.density * len(slots)
        )
        if n_edges > len(slots):
            raise ScaleInfeasible(f"edge space {es.id}: {n_edges} edges requested, {len(slots)} slots")
        if n_edges and any(not ok for _, _, ok in slots):
            slots = [slot for slot in slots if slot[2]]
            if n_edges > len(slots):
                raise ScaleInfeasible(f"edge space {es.id}: not enough target nodes")
        chosen = sorted(rng.sample(range(len(slots)), n_edges))
        for i in chosen:
            s, rel, ok = slots[i]
            t = rng.choice(ok)
            edges.append(Edge(f"e{len(edges)}", es.id, s.id, t.id, rel.label, es.category))

    manifest = {
        "seed": seed,
        "config_hash": stable_hash(
            json.dumps({"meta": meta.to_config(), "scale": scale.to_config()}, sort_keys=True)
        ),
        "scale": scale.to_config(),
    }
    return SpecificGraph(meta, nodes, edges, manifest)


def is_ambiguous(graph: SpecificGraph, edge: Edge | str) -> bool:
    """True iff several entities hold this attribute value under this relation."""
    e = graph.edge(edge if isinstance(edge, str) else edge.id)
    if e.category != ATTRIBUTE_ORIENTED:
        return False
    return len(attribute_holders(graph, e)) >= 2


def attribute_holders(graph: SpecificGraph, edge: Edge) -> set[str]:
    entity, attr = graph.entity_end(edge)
    entity_is_source = entity == edge.source
    holders: set[str] = set()
    for twin in graph.same_value(attr):
        holders.update(graph.neighbours(edge.space_id, edge.relation, not entity_is_source, twin))
    return holders


# --- paths -----------------------------------------------------------------


@dataclass(frozen=True)
class PathStep:
    edge_id: str
    forward: bool = True
    evidence: bool = False


@dataclass(frozen=True)
class ReasoningPath:
    """Ordered hops ``t_1..t_k``.

    Evidence steps are the disambiguating attribute edges attached to the
    entity reached by the preceding main step; they count toward the hop
    total.
    """

    steps: tuple[PathStep, ...]
    anchor: str
    answer_node: str

    @property
    def hop_count(self) -> int:
        return len(self.steps)

    @property
    def edges(self) -> tuple[str, ...]:
        return tuple(s.edge_id for s in self.steps)

    def to_dict(self) -> dict[str, Any]:
        return {
            "steps": [[s.edge_id, s.forward, s.evidence] for s in self.steps],
            "anchor": self.anchor,
            "answer_node": self.answer_node,
        }

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ReasoningPath":
        return cls(
            steps=tuple(PathStep(e, bool(f), bool(v)) for e, f, v in raw["steps"]),
            anchor=raw["anchor"],
            answer_node=raw["answer_node"],
        )


@dataclass(frozen=True)
class PathPolicy:
    max_attempts: int = 100
    max_evidence: int = 3
    min_personalized_ratio: float = 0.5
    allow_reverse_attribute: bool = True
    allow_value_hops: bool = True


def _closure(graph: SpecificGraph, nodes: Iterable[str]) -> frozenset[str]:
    out: set[str] = set()
    for n in nodes:
        out.update(graph.same_value(n))
    return frozenset(out)


def _step_frontier(graph: SpecificGraph, frontier: frozenset[str], edge: Edge, forward: bool) -> frozenset[str]:
    if edge.category == VALUE_ORIENTED:
        src_space, dst_space = graph.meta.edge_space(edge.space_id).endpoints
        if not forward:
            src_space, dst_space = dst_space, src_space
        cmp = COMPARATORS[edge.relation]
        if not forward:
            cmp = (lambda f: (lambda a, b: f(b, a)))(cmp)
        vt_from = graph.meta.space(src_space).value_type
        vt_to = graph.meta.space(dst_space).value_type
        from_vals = {numeric_value(graph.value(n), vt_from) for n in frontier}
        hits = [
            n
            for n in graph.space_nodes(dst_space)
            if any(cmp(v, numeric_value(graph.value(n), vt_to)) for v in from_vals)
        ]
        return _closure(graph, hits)
    reached: set[str] = set()
    for n in frontier:
        reached.update(graph.neighbours(edge.space_id, edge.relation, forward, n))
    return _closure(graph, reached)


def _evidence_filter(graph: SpecificGraph, frontier: frozenset[str], edge: Edge) -> frozenset[str]:
    entity, attr = graph.entity_end(edge)
    entity_is_source = entity == edge.source
    wanted = graph.value(attr)
    kept = set()
    for n in frontier:
        for other in graph.neighbours(edge.space_id, edge.relation, entity_is_source, n):
            if graph.value(other) == wanted:
                kept.add(n)
                break
    return frozenset(kept)


def _values(graph: SpecificGraph, nodes: Iterable[str]) -> frozenset[str]:
    return frozenset(graph.value(n) for n in nodes)


def resolve_answer(graph: SpecificGraph, path: ReasoningPath) -> frozenset[str]:
    """Every terminal value consistent with the path's relations and evidence."""
    for s in path.steps:
        if not graph.has_edge(s.edge_id):
            raise DanglingPath(f"path references missing edge {s.edge_id}")
    if path.anchor not in graph._node:
        raise DanglingPath(f"path references missing anchor {path.anchor}")
    frontier = _closure(graph, [path.anchor])
    for s in path.steps:
        e = graph.edge(s.edge_id)
        if s.evidence:
            frontier = _evidence_filter(graph, frontier, e)
        else:
            frontier = _step_frontier(graph, frontier, e, s.forward)
    return _values(graph, frontier)


def check_path(graph: SpecificGraph, path: ReasoningPath, policy: PathPolicy | None = None) -> None:
    """Raise ``GraphError`` unless ``path`` is a well-formed reasoning path."""
    policy = policy or PathPolicy()
    if path.hop_count < 2:
        raise GraphError("fewer than two hops")
    if not path.steps or path.steps[0].evidence or path.steps[-1].evidence:
        raise GraphError("path must start and end with a main step")
    cur = path.anchor
    visited = [cur]
    personalized = 0
    for s in path.steps:
        e = graph.edge(s.edge_id)
        if e.category in PERSONALIZED:
            personalized += 1
        if s.evidence:
            if e.category != ATTRIBUTE_ORIENTED or graph.entity_end(e)[0] != cur:
                raise GraphError(f"evidence edge {e.id} does not hang off {cur}")
            continue
        start, end = graph.endpoints(e, s.forward)
        if start != cur:
            raise GraphError(f"edge {e.id} does not continue from {cur}")
        if end in visited:
            raise GraphError(f"node {end} repeated")
        visited.append(end)
        cur = end
    if cur != path.answer_node:
        raise GraphError("answer node is not the end of the last hop")
    if graph.edge(path.steps[-1].edge_id).category == VALUE_ORIENTED:
        raise GraphError("value-oriented final hop")
    if personalized <= policy.min_personalized_ratio * path.hop_count:
        raise GraphError("personalized edges are not the majority")


def directly_linked(graph: SpecificGraph, a: str, b: str) -> bool:
    """True when any edge joins a node valued like ``a`` to one valued like ``b``."""
    targets = set(graph.same_value(b))
    for n in graph.same_value(a):
        for e in graph.out_edges(n):
            if e.target in targets:
                return True
        for e in graph.in_edges(n):
            if e.source in targets:
                return True
    return False


def _moves(graph: SpecificGraph, node: str, policy: PathPolicy) -> list[tuple[Edge, bool]]:
    moves = []
    for e in graph.out_edges(node):
        if e.category == VALUE_ORIENTED and not policy.allow_value_hops:
            continue
        moves.append((e, True))
    if policy.allow_reverse_attribute:
        for e in graph.in_edges(node):
            if e.category == ATTRIBUTE_ORIENTED and graph.kind(e.target) == ATTRIBUTE:
                moves.append((e, False))
    return moves


def sample_path(
    graph: SpecificGraph, hops: int, seed: int, policy: PathPolicy | None = None
) -> ReasoningPath:
    """Sample a ``hops``-edge reasoning path whose answer is unique."""
    policy = policy or PathPolicy()
    if hops < 2:
        raise HopsTooSmall(f"hops must be >= 2, got {hops}")
    starts: list[tuple[Edge, bool]] = []
    for e in graph.edges:
        if e.category == VALUE_ORIENTED and not policy.allow_value_hops:
            continue
        starts.append((e, True))
        if policy.allow_reverse_attribute and e.category == ATTRIBUTE_ORIENTED and graph.kind(e.target) == ATTRIBUTE:
            starts.append((e, False))
    if not starts:
        raise PathExhausted("graph has no edges")
    for attempt in range(policy.max_attempts):
        rng = stream(seed, f"path:{hops}", attempt)
        first, fwd = rng.choice(starts)
        path = _walk(graph, hops, first, fwd, rng, policy)
        if path is not None:
            return path
    raise PathExhausted(f"no valid {hops}-hop path within {policy.max_attempts} attempts")


def _walk(graph, hops, first, first_fwd, rng, policy) -> ReasoningPath | None:
    anchor, _ = graph.endpoints(first, first_fwd)
    cur = anchor
    frontier = _closure(graph, [anchor])
    visited = {anchor}
    used_values = {graph.value(anchor)}
    steps: list[PathStep] = []
    personalized = 0
    candidates: list[tuple[Edge, bool]] | None = [(first, first_fwd)]
    while len(steps) < hops:
        if candidates is None:
            candidates = _moves(graph, cur, policy)
            rng.shuffle(candidates)
        chosen = None
        for e, fwd in candidates:
            start, end = graph.endpoints(e, fwd)
            if end in visited:
                continue
            if graph.value(end) in used_values and e.relation != "same as":
                continue
            new_frontier = _step_frontier(graph, frontier, e, fwd)
            evidence: list[Edge] = []
            if len(_values(graph, new_frontier)) > 1:
                if e.category != ATTRIBUTE_ORIENTED or fwd:
                    continue
                evidence, new_frontier = _disambiguate(
                    graph, new_frontier, end, e, used_values | {graph.value(end)}, rng, policy
                )
                if len(_values(graph, new_frontier)) != 1:
                    continue
            if not new_frontier:
                continue
            remaining = hops - len(steps) - 1 - len(evidence)
            if remaining < 0:
                continue
            if remaining == 0:
                if evidence or e.category == VALUE_ORIENTED:
                    continue
                if directly_linked(graph, anchor, end):
                    continue
            chosen = (e, fwd, end, new_frontier, evidence)
            break
        if chosen is None:
            return None
        e, fwd, end, frontier, evidence = chosen
        steps.append(PathStep(e.id, fwd, False))
        personalized += e.category in PERSONALIZED
        visited.add(end)
        used_values.add(graph.value(end))
        for ev in evidence:
            steps.append(PathStep(ev.id, graph.entity_end(ev)[0] == ev.source, True))
            personalized += 1
            used_values.add(graph.value(graph.entity_end(ev)[1]))
        cur = end
        candidates = None
    if personalized <= policy.min_personalized_ratio * hops:
        return None
    path = ReasoningPath(tuple(steps), anchor, cur)
    if resolve_answer(graph, path) != frozenset([graph.value(cur)]):
        return None
    return path


def _disambiguate(graph, frontier, entity, hop_edge, used_values, rng, policy):
    options = [
        e
        for e in list(graph.out_edges(entity)) + list(graph.in_edges(entity))
        if e.category == ATTRIBUTE_ORIENTED
        and e.id != hop_edge.id
        and graph.entity_end(e)[0] == entity
        and graph.value(graph.entity_end(e)[1]) not in used_values
    ]
    rng.shuffle(options)
    chosen: list[Edge] = []
    seen_values = set(used_values)
    for e in options:
        if len(_values(graph, frontier)) <= 1 or len(chosen) >= policy.max_evidence:
            break
        value = graph.value(graph.entity_end(e)[1])
        if value in seen_values:
            continue
        narrowed = _evidence_filter(graph, frontier, e)
        if len(narrowed) < len(frontier):
            chosen.append(e)
            seen_values.add(value)
            frontier = narrowed
    return chosen, frontier
