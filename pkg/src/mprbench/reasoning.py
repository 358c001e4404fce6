"""The four reasoning structures as loops over memory, prompts and a provider.

Every provider call is recorded as a :class:`TraceStep` holding the template
id and the exact slot values, so prompts can be re-rendered and compared.
"""
from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

from .dataset import MprTask
from .implicit import AdapterRegistry, ClusterAssignment, route
from .memory.base import MemoryBackend, retrieve
from .memory.baselines import IgnoramusBackend, OracleBackend
from .prompts import render_prompt
from .providers import CompletionRequest

STRUCTURES = ("NR", "SR", "MR", "DR")
NO_THOUGHT = "(no thought)"


class ReasoningError(Exception):
    pass


class ConfigInvalid(ReasoningError):
    pass


@dataclass(frozen=True)
class ReasoningConfig:
    structure: str = "NR"
    max_steps: int = 5
    branches: int = 2
    max_subquestions: int = 5
    k: int | None = None
    model: str = "default"
    temperature: float = 0.0
    branch_temperature: float = 0.0
    max_tokens: int = 256
    selection: str = "llm"  # or "round_robin" (no provider call)

    def __post_init__(self) -> None:
        if self.structure not in STRUCTURES:
            raise ConfigInvalid(f"structure must be one of {STRUCTURES}")
        if self.max_steps < 1:
            raise ConfigInvalid("max_steps must be >= 1")
        if self.branches < 2:
            raise ConfigInvalid("branches must be >= 2")
        if self.max_subquestions < 1:
            raise ConfigInvalid("max_subquestions must be >= 1")
        if self.selection not in ("llm", "round_robin"):
            raise ConfigInvalid("selection must be 'llm' or 'round_robin'")
        if self.k is not None and self.k < 0:
            raise ConfigInvalid("k must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Lookup:
    ids: tuple[str, ...]
    texts: tuple[str, ...]
    model: str
    cluster: int | None = None


class MemoryView:
    """What one reasoning run sees of memory: a backend, a depth, optional routing."""

    def __init__(
        self,
        backend: MemoryBackend | None,
        k: int | None = None,
        model: str = "default",
        assignment: ClusterAssignment | None = None,
        registry: AdapterRegistry | None = None,
    ):
        if (assignment is None) != (registry is None):
            raise ConfigInvalid("hybrid routing needs both a cluster assignment and a registry")
        if registry is not None and (backend is None or isinstance(backend, IgnoramusBackend)):
            raise ConfigInvalid("hybrid routing needs a retrieving backend")
        self.backend = backend
        self.k = k
        self.model = model
        self.assignment = assignment
        self.registry = registry

    @property
    def explicit(self) -> bool:
        return self.backend is not None and not isinstance(self.backend, IgnoramusBackend)

    @property
    def hybrid(self) -> bool:
        return self.registry is not None

    def for_task(self, task: MprTask) -> "MemoryView":
        if isinstance(self.backend, OracleBackend):
            return MemoryView(self.backend.bind(task), self.k, self.model, self.assignment, self.registry)
        return self

    def lookup(self, query: str) -> Lookup:
        if not self.explicit:
            return Lookup((), (), self.model)
        hits = retrieve(self.backend, query, self.k)
        ids = tuple(h.statement_id for h in hits)
        texts = tuple(self.backend.text(i) for i in ids)
        if self.hybrid:
            r = route(hits, self.assignment, self.registry)
            return Lookup(ids, texts, r.model, r.cluster)
        return Lookup(ids, texts, self.model)


@dataclass
class TraceStep:
    step: str
    template_id: str
    slots: dict[str, Any]
    prompt: str
    query: str | None
    retrieved: list[str]
    model: str
    temperature: float
    raw: str
    parsed: str
    latency_ms: float
    prompt_tokens: int
    completion_tokens: int
    estimated_tokens: bool
    attempts: int
    flags: list[str] = field(default_factory=list)


@dataclass
class ReasoningTrace:
    structure: str
    question: str
    task_id: str | None = None
    steps: list[TraceStep] = field(default_factory=list)
    answer: str = ""
    flags: list[str] = field(default_factory=list)

    @property
    def calls(self) -> int:
        return len(self.steps)

    @property
    def latency_ms(self) -> float:
        return sum(s.latency_ms for s in self.steps)

    @property
    def tokens(self) -> tuple[int, int]:
        return sum(s.prompt_tokens for s in self.steps), sum(s.completion_tokens for s in self.steps)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "ReasoningTrace":
        steps = [TraceStep(**s) for s in raw.get("steps", [])]
        return cls(raw["structure"], raw["question"], raw.get("task_id"), steps, raw.get("answer", ""), list(raw.get("flags", [])))


def replay(trace: ReasoningTrace) -> list[int]:
    """Indices of steps whose prompt no longer re-renders identically (empty when faithful)."""
    return [i for i, s in enumerate(trace.steps) if render_prompt(s.template_id, s.slots) != s.prompt]


# --- parsing -------------------------------------------------------------------

_FENCE_RE = re.compile(r"^\s*```")
_ENUM_RE = re.compile(r"^\s*(?:[-*•]|\(?\d+[.):])\s*")


def _content_lines(text: str) -> list[str]:
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not _FENCE_RE.match(ln)]


def extract_answer(text: str) -> str:
    """Last nonempty line outside code fences, trimmed."""
    lines = _content_lines(text)
    return lines[-1] if lines else ""


def extract_thought(text: str) -> str:
    return " ".join(_content_lines(text))


def parse_subquestions(text: str, limit: int) -> list[str]:
    out = []
    for line in _content_lines(text):
        line = _ENUM_RE.sub("", line, count=1).strip()
        if line:
            out.append(line)
    return out[:limit]


def parse_choice(text: str, n: int) -> int | None:
    """1-based candidate number, or None when the reply names none in range."""
    m = re.search(r"\d+", text)
    if m is None:
        return None
    choice = int(m.group(0))
    return choice if 1 <= choice <= n else None


# --- engine --------------------------------------------------------------------


class _Run:
    def __init__(self, structure: str, question: str, memory: MemoryView, provider, config: ReasoningConfig, task_id):
        self.q = question
        self.memory = memory
        self.provider = provider
        self.config = config
        self.trace = ReasoningTrace(structure, question, task_id)

    def call(
        self,
        step: str,
        template_id: str,
        slots: dict[str, Any],
        lookup: Lookup | None,
        temperature: float | None = None,
        parse=extract_answer,
    ) -> TraceStep:
        model = lookup.model if lookup is not None else self.memory.model
        temperature = self.config.temperature if temperature is None else temperature
        prompt = render_prompt(template_id, slots)
        req = CompletionRequest(
            model, (("user", prompt),), temperature, self.config.max_tokens,
            {"task_id": self.trace.task_id, "step": step},
        )
        out = self.provider.complete(req)
        parsed = parse(out.text)
        flags = []
        if parse is extract_thought and not parsed:
            parsed = NO_THOUGHT
            flags.append("empty_thought")
        rec = TraceStep(
            step=step,
            template_id=template_id,
            slots=slots,
            prompt=prompt,
            query=slots.get("_query"),
            retrieved=list(lookup.ids) if lookup is not None else [],
            model=model,
            temperature=temperature,
            raw=out.text,
            parsed=parsed,
            latency_ms=out.latency_ms,
            prompt_tokens=out.usage.prompt_tokens,
            completion_tokens=out.usage.completion_tokens,
            estimated_tokens=out.usage.estimated,
            attempts=out.attempts,
            flags=flags,
        )
        rec.slots.pop("_query", None)
        self.trace.steps.append(rec)
        return rec

    def look(self, query: str) -> tuple[Lookup, str]:
        lk = self.memory.lookup(query)
        return lk, ("explicit" if lk.ids else "implicit")

    def finish(self, answer: str) -> tuple[str, ReasoningTrace]:
        self.trace.answer = answer
        return answer, self.trace


def _slots(q: str, query: str, **extra: Any) -> dict[str, Any]:
    return {"question": q, "_query": query, **extra}


def step_query(thoughts: Sequence[str], question: str) -> str:
    """Step-wise retrieval query: prior thoughts then the question, newline-joined."""
    return "\n".join([*thoughts, question])


def run_naive(q: str, memory: MemoryView, provider, config: ReasoningConfig | None = None, task_id: str | None = None):
    run = _Run("NR", q, memory, provider, config or ReasoningConfig("NR"), task_id)
    return _naive(run)


def _naive(run: _Run):
    lk, mode = run.look(run.q)
    slots = _slots(run.q, run.q)
    if mode == "explicit":
        slots["references"] = list(lk.texts)
    rec = run.call("answer", f"nr_{mode}", slots, lk)
    return run.finish(rec.parsed)


def run_sequential(q: str, memory: MemoryView, provider, config: ReasoningConfig | None = None, task_id: str | None = None):
    config = config or ReasoningConfig("SR")
    run = _Run("SR", q, memory, provider, config, task_id)
    l = config.max_steps
    thoughts: list[str] = []
    for i in range(1, l):
        query = step_query(thoughts, q)
        lk, mode = run.look(query)
        slots = _slots(q, query, max_steps=l)
        if mode == "explicit":
            slots["references"] = list(lk.texts)
        if i == 1:
            tid = f"sr_start_{mode}"
        else:
            tid = f"sr_think_{mode}"
            slots.update(current_step=i, thoughts=list(thoughts))
        rec = run.call(f"think:{i}", tid, slots, lk, parse=extract_thought)
        thoughts.append(rec.parsed)
    query = step_query(thoughts, q)
    lk, mode = run.look(query)
    slots = _slots(q, query, thoughts=list(thoughts))
    if mode == "explicit":
        slots["references"] = list(lk.texts)
    rec = run.call("answer", f"sr_answer_{mode}", slots, lk)
    return run.finish(rec.parsed)


def run_multipath(q: str, memory: MemoryView, provider, config: ReasoningConfig | None = None, task_id: str | None = None):
    config = config or ReasoningConfig("MR")
    run = _Run("MR", q, memory, provider, config, task_id)
    l, b = config.max_steps, config.branches
    chain: list[str] = []
    for i in range(1, l):
        # one shared retrieval per step feeds every branch
        query = step_query(chain, q)
        lk, mode = run.look(query)
        base = _slots(q, query)
        if mode == "explicit":
            base["references"] = list(lk.texts)
        if i == 1:
            tid = f"mr_start_{mode}"
        else:
            tid = f"mr_think_{mode}"
            base["thoughts"] = list(chain)
        candidates = []
        for j in range(1, b + 1):
            rec = run.call(f"think:{i}:{j}", tid, dict(base), lk, config.branch_temperature, parse=extract_thought)
            candidates.append(rec.parsed)
        if config.selection == "round_robin":
            pick = (i - 1) % b + 1
        else:
            sel = run.call(
                f"select:{i}", "mr_select",
                _slots(q, query, thoughts=list(chain), candidates=list(candidates)), lk,
            )
            pick = parse_choice(sel.raw, b)
            if pick is None:
                pick = 1
                sel.flags.append("selection_unparseable")
                run.trace.flags.append(f"selection_fallback:{i}")
        chain.append(candidates[pick - 1])
    query = step_query(chain, q)
    lk, mode = run.look(query)
    # the implicit MR answering prompt keeps an Information line, filled with whatever was retrieved
    slots = _slots(q, query, thoughts=list(chain), references=list(lk.texts))
    rec = run.call("answer", f"mr_answer_{mode}", slots, lk)
    return run.finish(rec.parsed)


def run_decomposition(q: str, memory: MemoryView, provider, config: ReasoningConfig | None = None, task_id: str | None = None):
    config = config or ReasoningConfig("DR")
    run = _Run("DR", q, memory, provider, config, task_id)
    mode = "explicit" if memory.explicit else "implicit"
    # the dividing prompt shows no references; hybrid routing still votes on a retrieval of q
    lk = memory.lookup(q) if memory.hybrid else None
    div = run.call(
        "divide", f"dr_divide_{mode}", _slots(q, None, max_subquestions=config.max_subquestions), lk,
        parse=lambda text: "\n".join(parse_subquestions(text, config.max_subquestions)),
    )
    subqs = div.parsed.split("\n") if div.parsed else []
    if not subqs:
        run.trace.flags.append("no_subquestions")
        return _naive(run)
    pairs: list[list[str | None]] = [[s, None] for s in subqs]
    for n, sub in enumerate(subqs):
        lk, m = run.look(sub)
        slots = _slots(q, sub, state=[list(p) for p in pairs], sub_question=sub)
        if m == "explicit":
            slots["references"] = list(lk.texts)
        rec = run.call(f"solve:{n + 1}", f"dr_solve_{m}", slots, lk)
        pairs[n][1] = rec.parsed
    lk, m = run.look(q)
    slots = _slots(q, q, state=[list(p) for p in pairs])
    if m == "explicit":
        slots["references"] = list(lk.texts)
    rec = run.call("merge", f"dr_merge_{m}", slots, lk)
    return run.finish(rec.parsed)


RUNNERS = {"NR": run_naive, "SR": run_sequential, "MR": run_multipath, "DR": run_decomposition}


def run_task(task: MprTask, memory: MemoryView, provider, config: ReasoningConfig):
    return RUNNERS[config.structure](task.question, memory.for_task(task), provider, config, task.task_id)


def expected_calls(config: ReasoningConfig, subquestions: int = 0) -> int:
    l, b = config.max_steps, config.branches
    if config.structure == "NR":
        return 1
    if config.structure == "SR":
        return l
    if config.structure == "MR":
        selections = (l - 1) if config.selection == "llm" else 0
        return b * (l - 1) + selections + 1
    return 2 + subquestions
