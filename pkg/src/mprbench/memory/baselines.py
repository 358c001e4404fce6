"""Oracle (gold references) and Ignoramus (no statements) baselines."""
from __future__ import annotations

from typing import Any, Sequence

from ..dataset import MprTask, Statement
from .base import BackendUnbuilt, MemoryBackend, MissingReference, ScoredStatement


def oracle_retrieve(task: MprTask, statements: Sequence[Statement]) -> list[Statement]:
    by_id = {s.id: s for s in statements}
    missing = [r for r in task.references if r not in by_id]
    if missing:
        raise MissingReference(f"task {task.task_id}: unknown references {missing}")
    return [by_id[r] for r in task.references]


class OracleBackend(MemoryBackend):
    """Returns the task's golden references regardless of the query."""

    kind = "oracle"

    def __init__(self, statements: Sequence[Statement], task: MprTask | None = None, **kw: Any):
        super().__init__(statements, **kw)
        self.task = task

    def bind(self, task: MprTask) -> "OracleBackend":
        return OracleBackend(self.statements, task, k_default=self.k_default)

    def search(self, query: str, k: int) -> list[ScoredStatement]:
        if self.task is None:
            raise BackendUnbuilt("the oracle backend needs a task context; call bind(task)")
        refs = oracle_retrieve(self.task, self.statements)
        n = len(refs)
        return [ScoredStatement(s.id, float(n - i), i + 1) for i, s in enumerate(refs)]


class IgnoramusBackend(MemoryBackend):
    kind = "ignoramus"

    def search(self, query: str, k: int) -> list[ScoredStatement]:
        return []


def build_oracle(statements: Sequence[Statement]) -> OracleBackend:
    return OracleBackend(statements)


def build_ignoramus(statements: Sequence[Statement] = ()) -> IgnoramusBackend:
    return IgnoramusBackend(statements)
