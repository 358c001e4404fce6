"""Scoring, run bookkeeping and report emission."""
from __future__ import annotations

import csv
import io
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import fmean
from typing import Any, Callable, Iterable, Mapping, Sequence

from .dataset import DatasetBundle, MprTask, SubDataset
from .implicit import ImplicitError
from .memory.base import MemoryIndexError
from .prompts import MissingSlot
from .providers import ProviderError
from .reasoning import MemoryView, ReasoningConfig, ReasoningError, run_task

NORMALIZATION_VERSION = "mprbench.norm/1"
RUN_FILE = "run.jsonl"
REPORT_FILE = "report.json"

_THOUSANDS_RE = re.compile(r"(?<=\d),(?=\d{3}(?!\d))")
_UNIT_RE = re.compile(r"(\d)\s*\(\s*([^()]*?)\s*\)")
_ARTICLE_RE = re.compile(r"\b(?:a|an|the)\b")
_EDGE_PUNCT = " \t\n\r\"'`"
_TERMINAL_PUNCT = ".,;:!?"


class IoFailure(Exception):
    pass


def _normalize_once(text: str) -> str:
    s = text.lower().strip().strip(_EDGE_PUNCT)
    s = s.rstrip(_TERMINAL_PUNCT + _EDGE_PUNCT)
    s = _THOUSANDS_RE.sub("", s)
    s = _UNIT_RE.sub(r"\1 (\2)", s)
    s = _ARTICLE_RE.sub(" ", s)
    return " ".join(s.split())


def normalize_answer(text: str) -> str:
    """Canonical form for exact match; applied until nothing changes."""
    prev, cur = None, text
    while cur != prev:
        prev, cur = cur, _normalize_once(cur)
    return cur


def exact_match(prediction: str, gold: str) -> int:
    return int(normalize_answer(prediction) == normalize_answer(gold))


@dataclass
class RunRecord:
    task_id: str
    user_id: str
    hops: int
    prediction: str
    gold: str
    em: int
    latency_ms: float
    tokens_in: int
    tokens_out: int
    structure: str
    backend: str
    calls: int = 0
    estimated_tokens: bool = False
    error: str | None = None
    trace: dict[str, Any] | None = None

    def __post_init__(self) -> None:
        if self.em not in (0, 1):
            raise ValueError("em must be 0 or 1")
        if self.latency_ms < 0:
            raise ValueError("latency must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class EvalReport:
    structure: str
    backend: str
    acc_overall: float
    acc_by_hop: dict[int, float]
    acc_by_user: dict[str, float]
    latency_by_hop: dict[int, float]
    counts: dict[str, Any]
    config: dict[str, Any] = field(default_factory=dict)
    normalization: str = NORMALIZATION_VERSION

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["acc_by_hop"] = {str(h): v for h, v in sorted(self.acc_by_hop.items())}
        out["latency_by_hop"] = {str(h): v for h, v in sorted(self.latency_by_hop.items())}
        return out

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "EvalReport":
        counts = dict(raw["counts"])
        if "by_hop" in counts:
            counts["by_hop"] = {int(h): n for h, n in counts["by_hop"].items()}
        return cls(
            structure=raw["structure"],
            backend=raw["backend"],
            acc_overall=raw["acc_overall"],
            acc_by_hop={int(h): v for h, v in raw["acc_by_hop"].items()},
            acc_by_user=dict(raw["acc_by_user"]),
            latency_by_hop={int(h): v for h, v in raw["latency_by_hop"].items()},
            counts=counts,
            config=dict(raw.get("config", {})),
            normalization=raw.get("normalization", NORMALIZATION_VERSION),
        )


def two_level_mean(groups: Mapping[str, Sequence[int]]) -> float:
    """Mean over groups of each group's mean; empty groups are skipped."""
    means = [fmean(v) for v in groups.values() if v]
    return fmean(means) if means else 0.0


def aggregate(records: Sequence[RunRecord], config: Mapping[str, Any] | None = None) -> EvalReport:
    if not records:
        raise ValueError("no run records to aggregate")
    by_user: dict[str, list[int]] = {}
    by_hop_user: dict[int, dict[str, list[int]]] = {}
    lat: dict[int, list[float]] = {}
    for r in records:
        by_user.setdefault(r.user_id, []).append(r.em)
        by_hop_user.setdefault(r.hops, {}).setdefault(r.user_id, []).append(r.em)
        lat.setdefault(r.hops, []).append(r.latency_ms)
    hops = sorted(by_hop_user)
    return EvalReport(
        structure=records[0].structure,
        backend=records[0].backend,
        acc_overall=two_level_mean(by_user),
        acc_by_hop={h: two_level_mean(by_hop_user[h]) for h in hops},
        acc_by_user={u: fmean(v) for u, v in sorted(by_user.items())},
        latency_by_hop={h: fmean(lat[h]) for h in hops},
        counts={
            "tasks": len(records),
            "failed": sum(1 for r in records if r.error),
            "estimated_tokens": any(r.estimated_tokens for r in records),
            "by_hop": {h: sum(len(v) for v in by_hop_user[h].values()) for h in hops},
        },
        config=dict(config or {}),
    )


# --- running -------------------------------------------------------------------

RECOVERABLE = (ProviderError, MemoryIndexError, ImplicitError, ReasoningError, MissingSlot)


def _run_one(task: MprTask, memory: MemoryView, provider, config: ReasoningConfig, backend: str) -> RunRecord:
    try:
        answer, trace = run_task(task, memory, provider, config)
    except RECOVERABLE as exc:
        return RunRecord(
            task.task_id, task.user_id, task.hops, "", task.answer, 0, 0.0, 0, 0,
            config.structure, backend, error=f"{type(exc).__name__}: {exc}",
        )
    tin, tout = trace.tokens
    return RunRecord(
        task.task_id, task.user_id, task.hops, answer, task.answer, exact_match(answer, task.answer),
        trace.latency_ms, tin, tout, config.structure, backend, trace.calls,
        any(s.estimated_tokens for s in trace.steps), trace=trace.to_dict(),
    )


def read_records(path: str | Path) -> list[RunRecord]:
    p = Path(path)
    if not p.exists():
        return []
    with open(p, encoding="utf-8") as fh:
        return [RunRecord(**json.loads(line)) for line in fh if line.strip()]


def evaluate(
    bundle: DatasetBundle,
    config: ReasoningConfig,
    memory_for: Callable[[SubDataset], MemoryView],
    provider,
    out_dir: str | Path | None = None,
    backend: str = "",
    workers: int = 1,
    snapshot: Mapping[str, Any] | None = None,
) -> tuple[EvalReport, list[RunRecord]]:
    """Run every task, appending to ``out_dir/run.jsonl``; finished task ids are skipped."""
    out = Path(out_dir) if out_dir is not None else None
    done: dict[str, RunRecord] = {}
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        done = {r.task_id: r for r in read_records(out / RUN_FILE)}
    lock = threading.Lock()
    fh = open(out / RUN_FILE, "a", encoding="utf-8") if out is not None else None
    try:
        for sd in bundle.sub_datasets:
            pending = [t for t in sd.tasks if t.task_id not in done]
            if not pending:
                continue
            memory = memory_for(sd)

            def work(task: MprTask) -> None:
                rec = _run_one(task, memory, provider, config, backend)
                with lock:
                    done[task.task_id] = rec
                    if fh is not None:
                        fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
                        fh.flush()

            if workers <= 1:
                for t in pending:
                    work(t)
            else:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    list(pool.map(work, pending))
    finally:
        if fh is not None:
            fh.close()
    records = [done[t.task_id] for t in bundle.tasks]
    snap = {"reasoning": config.to_dict(), "backend": backend, **(snapshot or {})}
    report = aggregate(records, snap)
    if out is not None:
        emit_report(report, "json", out / REPORT_FILE)
    return report, records


# --- reports -------------------------------------------------------------------

CSV_FIELDS = ("structure", "backend", "hop", "acc", "tasks", "mean_latency_ms")


def csv_rows(reports: Iterable[EvalReport]) -> list[dict[str, Any]]:
    rows = []
    for r in reports:
        for h in sorted(r.acc_by_hop):
            rows.append({
                "structure": r.structure, "backend": r.backend, "hop": h, "acc": r.acc_by_hop[h],
                "tasks": r.counts.get("by_hop", {}).get(h, 0), "mean_latency_ms": r.latency_by_hop.get(h, 0.0),
            })
    return rows


def markdown_table(reports: Sequence[EvalReport]) -> str:
    hops = sorted({h for r in reports for h in r.acc_by_hop})
    head = ["Structure", "Memory", *[f"{h}-hop" for h in hops], "Overall"]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for r in sorted(reports, key=lambda r: (r.structure, r.backend)):
        cells = [f"{r.acc_by_hop[h]:.4f}" if h in r.acc_by_hop else "-" for h in hops]
        lines.append("| " + " | ".join([r.structure, r.backend, *cells, f"{r.acc_overall:.4f}"]) + " |")
    return "\n".join(lines) + "\n"


def render_report(reports: EvalReport | Sequence[EvalReport], fmt: str) -> str:
    reports = [reports] if isinstance(reports, EvalReport) else list(reports)
    if fmt == "json":
        body: Any = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
        return json.dumps(body, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(csv_rows(reports))
        return buf.getvalue()
    if fmt in ("md", "markdown"):
        return markdown_table(reports)
    raise ValueError(f"unknown report format {fmt!r}")


def emit_report(reports: EvalReport | Sequence[EvalReport], fmt: str, path: str | Path) -> Path:
    text = render_report(reports, fmt)
    try:
        Path(path).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    return Path(path)


def load_report(path: str | Path) -> EvalReport | list[EvalReport]:
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(raw, list):
        return [EvalReport.from_dict(r) for r in raw]
    return EvalReport.from_dict(raw)
