"""Statements, multi-hop questions and benchmark bundles."""
from __future__ import annotations

import json
import logging
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Protocol

from .graph import (
    VALUE_ORIENTED,
    Edge,
    GraphError,
    GraphScaleConfig,
    MetaGraph,
    PathExhausted,
    PathPolicy,
    ReasoningPath,
    SpecificGraph,
    check_path,
    directly_linked,
    instantiate_graph,
    load_graph,
    resolve_answer,
    sample_path,
    save_graph,
)
from .rng import stable_hash, stream

log = logging.getLogger(__name__)

BUNDLE_SCHEMA = "mprbench.bundle/1"


class DatasetError(Exception):
    pass


class ValueOrientedEdge(DatasetError):
    pass


class GenerationFailed(DatasetError):
    pass


class EndpointMissing(GenerationFailed):
    pass


class LeakageDetected(DatasetError):
    pass


class QuotaUnmeetable(DatasetError):
    pass


_TOKEN_RE = re.compile(r"\w+")


def text_tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.casefold())


def mentions(text: str, value: str) -> bool:
    """Whole-token, case-insensitive containment of ``value`` in ``text``."""
    needle = text_tokens(value)
    hay = text_tokens(text)
    if not needle:
        return False
    n = len(needle)
    return any(hay[i : i + n] == needle for i in range(len(hay) - n + 1))


@dataclass(frozen=True)
class Statement:
    id: str
    text: str
    edge_ref: str
    user_id: str


@dataclass(frozen=True)
class MprTask:
    task_id: str
    hops: int
    question: str
    answer: str
    path: tuple[str, ...]
    references: tuple[str, ...]
    user_id: str
    path_detail: ReasoningPath | None = None

    def to_dict(self) -> dict[str, Any]:
        out = {
            "task_id": self.task_id,
            "user_id": self.user_id,
            "hops": self.hops,
            "question": self.question,
            "answer": self.answer,
            "path": list(self.path),
            "references": list(self.references),
        }
        if self.path_detail is not None:
            out["path_detail"] = self.path_detail.to_dict()
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "MprTask":
        detail = raw.get("path_detail")
        return cls(
            task_id=raw["task_id"],
            hops=int(raw["hops"]),
            question=raw["question"],
            answer=raw["answer"],
            path=tuple(raw["path"]),
            references=tuple(raw["references"]),
            user_id=raw["user_id"],
            path_detail=ReasoningPath.from_dict(detail) if detail else None,
        )


# --- text generation backends ------------------------------------------------


class TextGen(Protocol):
    mode: str

    def statement(self, edge: Edge, graph: SpecificGraph) -> str: ...

    def question(self, path: ReasoningPath, refs: list[Statement], graph: SpecificGraph) -> str: ...


def _statement_template(graph: SpecificGraph, edge: Edge) -> str:
    rel = graph.meta.relation(edge.space_id, edge.relation)
    pattern = rel.statement or "{source}'s {label} is {target}."
    return pattern.format(
        source=graph.value(edge.source), target=graph.value(edge.target), label=edge.relation
    )


def template_question(path: ReasoningPath, graph: SpecificGraph) -> str:
    """Nest relation phrases around the anchor, innermost first."""
    meta = graph.meta
    phrase = graph.value(path.anchor)
    steps = list(path.steps)
    main_idx = [i for i, s in enumerate(steps) if not s.evidence]
    for n, i in enumerate(main_idx):
        step = steps[i]
        edge = graph.edge(step.edge_id)
        rel = meta.relation(edge.space_id, edge.relation)
        last = n == len(main_idx) - 1
        if not step.forward:
            # attribute -> entity: describe the entity by its attribute and evidence
            end = graph.endpoints(edge, False)[1]
            noun = meta.space(graph.node(end).space_id).noun
            clauses = [_clause(rel, edge.relation, phrase)]
            j = i + 1
            while j < len(steps) and steps[j].evidence:
                ev = graph.edge(steps[j].edge_id)
                ev_rel = meta.relation(ev.space_id, ev.relation)
                clauses.append(_clause(ev_rel, ev.relation, graph.value(graph.entity_end(ev)[1])))
                j += 1
            body = " and ".join(clauses)
            if last:
                return _finish(f"Which {noun} {body}?")
            phrase = f"the {noun} {body}"
            continue
        if last:
            if rel.ask:
                return _finish(rel.ask.format(x=phrase))
            return _finish(f"What is {_forward(graph, edge, rel, phrase)}?")
        phrase = _forward(graph, edge, rel, phrase)
    raise GraphError("path has no main step")


def _forward(graph: SpecificGraph, edge: Edge, rel, phrase: str) -> str:
    if rel.forward:
        return rel.forward.format(x=phrase)
    if edge.category == VALUE_ORIENTED:
        noun = graph.meta.space(graph.node(edge.target).space_id).noun
        return f"the {noun} {edge.relation} {phrase}"
    return f"the {edge.relation} of {phrase}"


def _clause(rel, label: str, value: str) -> str:
    if rel.clause:
        return rel.clause.format(x=value)
    return f"whose {label} is {value}"


def _finish(question: str) -> str:
    return question[:1].upper() + question[1:]


class TemplateTextGen:
    """Deterministic phrasing: one canonical pattern per relation."""

    mode = "template"

    def statement(self, edge: Edge, graph: SpecificGraph) -> str:
        return _statement_template(graph, edge)

    def question(self, path: ReasoningPath, refs: list[Statement], graph: SpecificGraph) -> str:
        return template_question(path, graph)


STATEMENT_PROMPT = (
    "Rewrite the following fact about a user's personal world as one natural English sentence.\n"
    "Fact: {fact}\n"
    "Requirements:\n"
    '1. Keep "{source}" and "{target}" exactly as written.\n'
    "2. Output only the sentence in one line, without any other descriptions."
)

QUESTION_PROMPT = (
    "Rewrite the draft below as one fluent multi-hop question that can only be answered by "
    "combining the given statements.\n"
    "Statements:\n{statements}\n"
    "Draft question: {draft}\n"
    "Requirements:\n"
    '1. The question must mention "{anchor}".\n'
    "2. The question must not mention any of: {hidden}.\n"
    "3. Output only the question in one line, without any other descriptions."
)


class LlmTextGen:
    """Paraphrases through a chat provider; output is validated and regenerated."""

    mode = "llm"

    def __init__(self, provider, model: str = "default", retries: int = 3, temperature: float = 0.7):
        self.provider = provider
        self.model = model
        self.retries = retries
        self.temperature = temperature

    def _ask(self, prompt: str, tag: str) -> str:
        from .providers import CompletionRequest

        req = CompletionRequest(
            model_or_adapter=self.model,
            messages=(("user", prompt),),
            temperature=self.temperature,
            metadata={"step": tag},
        )
        text = self.provider.complete(req).text
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        return lines[0] if lines else ""

    def statement(self, edge: Edge, graph: SpecificGraph) -> str:
        source, target = graph.value(edge.source), graph.value(edge.target)
        prompt = STATEMENT_PROMPT.format(
            fact=f"({source}, {edge.relation}, {target})", source=source, target=target
        )
        for _ in range(self.retries + 1):
            text = self._ask(prompt, "statement")
            if _has_endpoints(text, source, target):
                return text
        raise EndpointMissing(f"edge {edge.id}: generated statement lost an endpoint value")

    def question(self, path: ReasoningPath, refs: list[Statement], graph: SpecificGraph) -> str:
        draft = template_question(path, graph)
        hidden = _hidden_values(path, graph)
        anchor = graph.value(path.anchor)
        prompt = QUESTION_PROMPT.format(
            statements="\n".join(s.text for s in refs),
            draft=draft,
            anchor=anchor,
            hidden=", ".join(f'"{v}"' for v in hidden),
        )
        for _ in range(self.retries + 1):
            text = self._ask(prompt, "question")
            if text and mentions(text, anchor) and not any(mentions(text, v) for v in hidden):
                return text
        raise GenerationFailed("could not produce a leakage-free question")


def _norm(text: str) -> str:
    return " ".join(text.casefold().split())


def _has_endpoints(text: str, source: str, target: str) -> bool:
    t = _norm(text)
    return _norm(source) in t and _norm(target) in t


def _hidden_values(path: ReasoningPath, graph: SpecificGraph) -> list[str]:
    out = []
    for s in path.steps:
        if s.evidence:
            continue
        end = graph.endpoints(graph.edge(s.edge_id), s.forward)[1]
        out.append(graph.value(end))
    return out


# --- operations ---------------------------------------------------------------


def render_statement(edge: Edge, graph: SpecificGraph, gen: TextGen, user_id: str = "u00") -> Statement:
    if edge.category == VALUE_ORIENTED:
        raise ValueOrientedEdge(f"edge {edge.id} is value-oriented and has no statement")
    text = gen.statement(edge, graph)
    if not _has_endpoints(text, graph.value(edge.source), graph.value(edge.target)):
        raise EndpointMissing(f"statement for {edge.id} lacks an endpoint value")
    return Statement(id=f"{user_id}-s{edge.id[1:]}", text=text, edge_ref=edge.id, user_id=user_id)


def derive_question(path: ReasoningPath, refs: list[Statement], graph: SpecificGraph, gen: TextGen) -> str:
    """Phrase ``path`` as a question that names the anchor and nothing downstream."""
    expected = [s.edge_id for s in path.steps if graph.edge(s.edge_id).category != VALUE_ORIENTED]
    if [r.edge_ref for r in refs] != expected:
        raise DatasetError("references do not align with the path's statement-bearing edges")
    if len(resolve_answer(graph, path)) != 1:
        raise DatasetError("path does not resolve to a unique answer")
    question = gen.question(path, refs, graph)
    if not mentions(question, graph.value(path.anchor)):
        raise GenerationFailed("question does not mention the anchor value")
    leaked = [v for v in _hidden_values(path, graph) if mentions(question, v)]
    if leaked:
        raise LeakageDetected(f"question mentions {leaked!r}")
    return question


@dataclass(frozen=True)
class BundleConfig:
    users: int = 2
    hop_min: int = 2
    hop_max: int = 10
    per_hop: int = 3
    seed: int = 0
    scale: GraphScaleConfig | None = None
    policy: PathPolicy = field(default_factory=PathPolicy)
    attempts_per_task: int = 25

    @property
    def hops(self) -> range:
        return range(self.hop_min, self.hop_max + 1)

    def to_config(self) -> dict[str, Any]:
        out = asdict(self)
        out["scale"] = self.scale.to_config() if self.scale else None
        return out


@dataclass
class SubDataset:
    user_id: str
    statements: list[Statement]
    tasks: list[MprTask]
    graph: SpecificGraph | None = None

    def statement_map(self) -> dict[str, Statement]:
        return {s.id: s for s in self.statements}


@dataclass
class DatasetBundle:
    sub_datasets: list[SubDataset]
    manifest: dict[str, Any]

    @property
    def tasks(self) -> list[MprTask]:
        return [t for sd in self.sub_datasets for t in sd.tasks]

    def user(self, user_id: str) -> SubDataset:
        for sd in self.sub_datasets:
            if sd.user_id == user_id:
                return sd
        raise KeyError(user_id)


def _derived_seed(seed: int, *parts: Any) -> int:
    return stream(seed, ":".join(str(p) for p in parts)).getrandbits(63)


def build_bundle(meta: MetaGraph, config: BundleConfig, gen: TextGen | None = None) -> DatasetBundle:
    gen = gen or TemplateTextGen()
    scale = config.scale
    if scale is None:
        from .defaults import DESK_SCALE

        scale = DESK_SCALE
    subs: list[SubDataset] = []
    counts_by_hop = {h: 0 for h in config.hops}
    rejected = 0
    for u in range(config.users):
        user_id = f"u{u:02d}"
        graph = instantiate_graph(meta, _derived_seed(config.seed, "user", u), scale)
        statements: list[Statement] = []
        by_edge: dict[str, Statement] = {}
        for edge in graph.edges:
            if edge.category == VALUE_ORIENTED:
                continue
            st = render_statement(edge, graph, gen, user_id)
            statements.append(st)
            by_edge[edge.id] = st
        tasks: list[MprTask] = []
        for h in config.hops:
            seen: set[tuple[str, ...]] = set()
            made = 0
            budget = config.per_hop * config.attempts_per_task
            for attempt in range(budget):
                if made == config.per_hop:
                    break
                try:
                    path = sample_path(graph, h, _derived_seed(config.seed, user_id, h, attempt), config.policy)
                except PathExhausted:
                    rejected += 1
                    continue
                if path.edges in seen:
                    rejected += 1
                    continue
                refs = [by_edge[e] for e in path.edges if e in by_edge]
                try:
                    question = derive_question(path, refs, graph, gen)
                except (LeakageDetected, GenerationFailed) as exc:
                    log.debug("rejected %s-hop path for %s: %s", h, user_id, exc)
                    rejected += 1
                    continue
                seen.add(path.edges)
                tasks.append(
                    MprTask(
                        task_id=f"{user_id}-h{h:02d}-{made:04d}",
                        hops=h,
                        question=question,
                        answer=graph.value(path.answer_node),
                        path=path.edges,
                        references=tuple(r.id for r in refs),
                        user_id=user_id,
                        path_detail=path,
                    )
                )
                made += 1
            if made < config.per_hop:
                raise QuotaUnmeetable(f"{user_id}: only {made}/{config.per_hop} tasks with {h} hops")
            counts_by_hop[h] += made
        subs.append(SubDataset(user_id, statements, tasks, graph))
    manifest = {
        "schema": BUNDLE_SCHEMA,
        "seed": config.seed,
        "config_hash": stable_hash(
            json.dumps({"meta": meta.to_config(), "config": config.to_config(), "scale": scale.to_config()},
                       sort_keys=True, default=str)
        ),
        "textgen": gen.mode,
        "users": [sd.user_id for sd in subs],
        "hops": list(config.hops),
        "per_hop": config.per_hop,
        "counts_by_hop": {str(h): n for h, n in counts_by_hop.items()},
        "statements_by_user": {sd.user_id: len(sd.statements) for sd in subs},
        "tasks_total": sum(len(sd.tasks) for sd in subs),
        "hops_total": sum(t.hops for sd in subs for t in sd.tasks),
        "references_total": sum(len(t.references) for sd in subs for t in sd.tasks),
        "rejected_paths": rejected,
    }
    return DatasetBundle(subs, manifest)


# --- persistence ----------------------------------------------------------------


def _dumps(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False)


def save_bundle(bundle: DatasetBundle, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "graphs").mkdir(parents=True, exist_ok=True)
    with open(out / "statements.jsonl", "w", encoding="utf-8") as fh:
        for sd in bundle.sub_datasets:
            for st in sd.statements:
                fh.write(_dumps(asdict(st)) + "\n")
    with open(out / "tasks.jsonl", "w", encoding="utf-8") as fh:
        for sd in bundle.sub_datasets:
            for t in sd.tasks:
                fh.write(_dumps(t.to_dict()) + "\n")
    for sd in bundle.sub_datasets:
        if sd.graph is not None:
            save_graph(sd.graph, out / "graphs" / f"{sd.user_id}.json")
    (out / "manifest.json").write_text(json.dumps(bundle.manifest, indent=2, ensure_ascii=False) + "\n", "utf-8")
    return out


def _read_jsonl(path: Path) -> Iterable[dict[str, Any]]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def load_bundle(path: str | Path, with_graphs: bool = True) -> DatasetBundle:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text("utf-8"))
    if manifest.get("schema") != BUNDLE_SCHEMA:
        raise DatasetError(f"unsupported bundle schema {manifest.get('schema')!r}")
    statements: dict[str, list[Statement]] = {u: [] for u in manifest["users"]}
    for raw in _read_jsonl(root / "statements.jsonl"):
        statements.setdefault(raw["user_id"], []).append(Statement(**raw))
    tasks: dict[str, list[MprTask]] = {u: [] for u in statements}
    for raw in _read_jsonl(root / "tasks.jsonl"):
        tasks.setdefault(raw["user_id"], []).append(MprTask.from_dict(raw))
    subs = []
    for user_id in statements:
        graph_path = root / "graphs" / f"{user_id}.json"
        graph = load_graph(graph_path) if with_graphs and graph_path.exists() else None
        subs.append(SubDataset(user_id, statements[user_id], tasks.get(user_id, []), graph))
    return DatasetBundle(subs, manifest)


# --- validation sweep -------------------------------------------------------------


@dataclass
class ValidationReport:
    checked: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def validate_bundle(bundle: DatasetBundle) -> ValidationReport:
    """Re-run every dataset oracle over every task of the bundle."""
    report = ValidationReport()
    per_hop: dict[str, int] = {}
    for sd in bundle.sub_datasets:
        smap = sd.statement_map()
        graph = sd.graph
        for task in sd.tasks:
            report.checked += 1
            per_hop[str(task.hops)] = per_hop.get(str(task.hops), 0) + 1

            def fail(msg: str, task=task) -> None:
                report.failures.append((task.task_id, msg))

            for ref in task.references:
                st = smap.get(ref)
                if st is None or st.user_id != task.user_id:
                    fail(f"reference {ref} does not resolve")
            if task.hops != len(task.path):
                fail("hops does not match path length")
            if graph is None or task.path_detail is None:
                fail("no graph or path detail to replay")
                continue
            path = task.path_detail
            try:
                check_path(graph, path)
                answers = resolve_answer(graph, path)
            except GraphError as exc:
                fail(f"invalid path: {exc}")
                continue
            if answers != {task.answer} or graph.value(path.answer_node) != task.answer:
                fail(f"answer set {sorted(answers)} != {{{task.answer!r}}}")
            expected_refs = [e for e in task.path if graph.edge(e).category != VALUE_ORIENTED]
            if [smap[r].edge_ref for r in task.references if r in smap] != expected_refs:
                fail("references do not map 1:1 onto statement-bearing edges")
            if not mentions(task.question, graph.value(path.anchor)):
                fail("question does not mention the anchor")
            leaked = [v for v in _hidden_values(path, graph) if mentions(task.question, v)]
            if leaked:
                fail(f"question leaks {leaked!r}")
            if directly_linked(graph, path.anchor, path.answer_node):
                fail("a single statement links the anchor to the answer")
    if bundle.manifest.get("counts_by_hop") and per_hop != {
        k: v for k, v in bundle.manifest["counts_by_hop"].items() if v
    }:
        report.failures.append(("manifest", "per-hop counts disagree with tasks"))
    return report
