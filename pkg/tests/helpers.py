"""Small hand-built worlds shared by several test modules."""
from __future__ import annotations

from mprbench.dataset import Statement
from mprbench.graph import Edge, MetaGraph, Node, SpecificGraph

TOY_META = {
    "node_spaces": [
        {"id": "person", "kind": "entity", "noun": "person", "pool": ["Alice", "Bob", "Carol", "David", "Erin", "Frank"]},
        {"id": "city", "kind": "attribute", "noun": "city", "pool": ["Chicago", "Boston", "Denver", "New York"]},
        {"id": "salary", "kind": "attribute", "noun": "salary", "value_type": "number",
         "pool": ["100 (USD)", "200 (USD)", "300 (USD)"]},
    ],
    "edge_spaces": [
        {"id": "person_person", "endpoints": ["person", "person"], "category": "entity-oriented",
         "relations": [
             {"label": "husband", "statement": "{source}'s husband is {target}.", "forward": "the husband of {x}",
              "ask": "Who is the husband of {x}?"},
             {"label": "supervisor", "statement": "{source} is supervised by {target}.",
              "forward": "the supervisor of {x}", "ask": "Who is the supervisor of {x}?"},
         ]},
        {"id": "person_city", "endpoints": ["person", "city"], "category": "attribute-oriented",
         "relations": [
             {"label": "works in", "statement": "{source} works in {target}.", "forward": "the city where {x} works",
              "clause": "who works in {x}", "ask": "Which city does {x} work in?"},
             {"label": "lives in", "statement": "{source} lives in {target}.", "forward": "the city where {x} lives",
              "clause": "who lives in {x}", "ask": "Which city does {x} live in?"},
         ]},
        {"id": "person_salary", "endpoints": ["person", "salary"], "category": "attribute-oriented",
         "relations": [{"label": "salary", "statement": "{source} earns {target}.", "forward": "the salary of {x}",
                        "clause": "who earns {x}"}]},
        {"id": "salary_salary", "endpoints": ["salary", "salary"], "category": "value-oriented",
         "relations": [{"label": "greater than", "statement": ""}]},
    ],
}


def toy_meta() -> MetaGraph:
    return MetaGraph.from_config(TOY_META)


def toy_graph(nodes: list[tuple[str, str, str]], edges: list[tuple[str, str, str, str]]) -> SpecificGraph:
    """``nodes`` = (id, space, value); ``edges`` = (space, source, target, relation)."""
    meta = toy_meta()
    cats = {e.id: e.category for e in meta.edge_spaces}
    return SpecificGraph(
        meta,
        [Node(*n) for n in nodes],
        [Edge(f"e{i}", s, a, b, r, cats[s]) for i, (s, a, b, r) in enumerate(edges)],
    )


def stmts(texts: list[str], user: str = "u") -> list[Statement]:
    return [Statement(f"{user}-s{i:02d}", t, f"e{i}", user) for i, t in enumerate(texts)]
