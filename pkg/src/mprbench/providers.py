"""Chat-completion and embedding providers.

``RemoteProvider``/``RemoteEmbedder`` speak the OpenAI-compatible wire format
over HTTP.  ``ScriptedProvider`` and ``HashingEmbedder`` are deterministic
offline stand-ins used by tests and dry runs.
"""
from __future__ import annotations

import hashlib
import json
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import httpx
import numpy as np

ENV_BASE_URL = "MPR_BASE_URL"
ENV_API_KEY = "MPR_API_KEY"
ENV_MODEL = "MPR_MODEL"
ENV_EMBED_MODEL = "MPR_EMBED_MODEL"


class ProviderError(Exception):
    pass


class Timeout(ProviderError):
    pass


class HttpError(ProviderError):
    def __init__(self, status: int, body: str):
        super().__init__(f"HTTP {status}: {body[:500]}")
        self.status = status
        self.body = body


class NoRuleMatched(ProviderError):
    pass


class DimensionMismatch(ProviderError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    model_or_adapter: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = 0.0
    max_tokens: int = 256
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not any(role == "user" for role, _ in self.messages):
            raise ValueError("a completion request needs at least one user message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    @property
    def prompt(self) -> str:
        return "\n".join(content for _, content in self.messages)


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int
    completion_tokens: int
    estimated: bool = False


@dataclass(frozen=True)
class Completion:
    text: str
    usage: Usage
    latency_ms: float
    attempts: int = 1
    model: str = ""


@dataclass(frozen=True)
class CallRecord:
    prompt_hash: str
    model: str
    latency_ms: float
    prompt_tokens: int
    completion_tokens: int
    estimated_tokens: bool
    attempts: int
    task_id: str | None = None
    step: str | None = None


def whitespace_tokens(text: str) -> int:
    return len(text.split())


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class _Recorder:
    def __init__(self) -> None:
        self.calls: list[CallRecord] = []
        self._calls_lock = threading.Lock()

    def _record(self, req: CompletionRequest, out: Completion) -> None:
        rec = CallRecord(
            prompt_hash=prompt_hash(req.prompt),
            model=req.model_or_adapter,
            latency_ms=out.latency_ms,
            prompt_tokens=out.usage.prompt_tokens,
            completion_tokens=out.usage.completion_tokens,
            estimated_tokens=out.usage.estimated,
            attempts=out.attempts,
            task_id=req.metadata.get("task_id"),
            step=req.metadata.get("step"),
        )
        with self._calls_lock:
            self.calls.append(rec)


# --- scripted ----------------------------------------------------------------


@dataclass(frozen=True)
class ScriptedRule:
    match: str
    responses: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.responses:
            raise ValueError("a scripted rule needs at least one response")


class ScriptedProvider(_Recorder):
    """First rule whose ``match`` occurs in the prompt answers.

    Each rule hands out its responses in order and repeats the last one once
    exhausted.  With no match the ``default`` response is used, or
    :class:`NoRuleMatched` is raised when no default is configured.
    """

    def __init__(self, rules: Iterable[ScriptedRule] = (), default: str | None = None):
        super().__init__()
        self.rules = tuple(rules)
        self.default = default
        self._hits = [0] * len(self.rules)
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedProvider":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = [ScriptedRule(r["match"], tuple(r["responses"])) for r in raw.get("rules", [])]
        return cls(rules, raw.get("default"))

    def respond(self, prompt: str) -> str:
        for i, rule in enumerate(self.rules):
            if rule.match in prompt:
                with self._lock:
                    n = self._hits[i]
                    self._hits[i] += 1
                return rule.responses[min(n, len(rule.responses) - 1)]
        if self.default is None:
            raise NoRuleMatched(f"no scripted rule matches prompt {prompt[:80]!r}")
        return self.default

    def complete(self, req: CompletionRequest) -> Completion:
        start = time.perf_counter()
        text = self.respond(req.prompt)
        out = Completion(
            text=text,
            usage=Usage(whitespace_tokens(req.prompt), whitespace_tokens(text), estimated=True),
            latency_ms=(time.perf_counter() - start) * 1000.0,
            model=req.model_or_adapter,
        )
        self._record(req, out)
        return out


def gold_echo_rules(tasks: Iterable[Any]) -> list[ScriptedRule]:
    """One rule per task answering its gold answer whenever the question shows up."""
    return [ScriptedRule(f"Question: {t.question}\n", (t.answer,)) for t in tasks]


# --- remote ------------------------------------------------------------------


class _Http:
    def __init__(
        self,
        base_url: str | None,
        api_key: str | None,
        timeout: float,
        max_attempts: int,
        backoff: float,
        max_in_flight: int,
        transport: httpx.BaseTransport | None,
        sleep: Callable[[float], None],
        seed: int,
    ) -> None:
        base_url = base_url or os.environ.get(ENV_BASE_URL) or os.environ.get("OPENAI_BASE_URL")
        if not base_url:
            raise ProviderError(f"no endpoint configured; set {ENV_BASE_URL}")
        api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, os.environ.get("OPENAI_API_KEY", ""))
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.client = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport)
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.sleep = sleep
        self.in_flight = threading.BoundedSemaphore(max_in_flight)
        self._jitter = random.Random(seed)
        self.attempt_log: list[int] = []

    def post(self, path: str, payload: dict[str, Any]) -> tuple[dict[str, Any], int]:
        last: Exception | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self.in_flight:
                    resp = self.client.post(path, json=payload)
            except httpx.TimeoutException as exc:
                last = Timeout(str(exc) or "request timed out")
            except httpx.TransportError as exc:
                last = ProviderError(f"transport error: {exc}")
            else:
                if resp.status_code == 200:
                    self.attempt_log.append(attempt)
                    return resp.json(), attempt
                last = HttpError(resp.status_code, resp.text)
                if resp.status_code != 429 and resp.status_code < 500:
                    break
            if attempt < self.max_attempts:
                delay = self.backoff * 2 ** (attempt - 1)
                self.sleep(delay + self._jitter.uniform(0, delay / 2))
        self.attempt_log.append(attempt)
        assert last is not None
        raise last


class RemoteProvider(_Recorder):
    """OpenAI-compatible ``/chat/completions`` client with retries."""

    def __init__(
        self,
        base_url: str | None = None,
        api_key: str | None = None,
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 8,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        seed: int = 0,
    ):
        super().__init__()
        self.http = _Http(base_url, api_key, timeout, max_attempts, backoff, max_in_flight, transport, sleep, seed)

    def complete(self, req: CompletionRequest) -> Completion:
        payload = {
            "model": req.model_or_adapter,
            "messages": [{"role": r, "content": c} for r, c in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        }
        start = time.perf_counter()
        body, attempts = self.http.post("/chat/completions", payload)
        latency = (time.perf_counter() - start) * 1000.0
        try:
            text = body["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion response: {body!r:.200}") from exc
        usage = body.get("usage") or {}
        if "prompt_tokens" in usage and "completion_tokens" in usage:
            u = Usage(int(usage["prompt_tokens"]), int(usage["completion_tokens"]))
        else:
            u = Usage(whitespace_tokens(req.prompt), whitespace_tokens(text), estimated=True)
        out = Completion(text=text, usage=u, latency_ms=latency, attempts=attempts, model=req.model_or_adapter)
        self._record(req, out)
        return out


# --- embeddings ----------------------------------------------------------------

_WORD_RE = re.compile(r"\w+")


def _check_batch(texts: Sequence[str]) -> list[str]:
    texts = list(texts)
    if not texts:
        raise ValueError("embed needs at least one text")
    return texts


class HashingEmbedder:
    """L2-normalised hashed bag of words."""

    def __init__(self, dim: int = 256):
        self.dim = dim

    def bucket(self, token: str) -> int:
        return int.from_bytes(hashlib.md5(token.encode("utf-8")).digest()[:8], "big") % self.dim

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = _check_batch(texts)
        out = np.zeros((len(texts), self.dim), dtype=np.float64)
        for i, text in enumerate(texts):
            for tok in _WORD_RE.findall(text.lower()):
                out[i, self.bucket(tok)] += 1.0
        norms = np.linalg.norm(out, axis=1, keepdims=True)
        np.divide(out, norms, out=out, where=norms > 0)
        return out


class RemoteEmbedder:
    """OpenAI-compatible ``/embeddings`` client."""

    def __init__(self, model: str | None = None, batch_size: int = 64, **http_kwargs: Any):
        kwargs = dict(
            base_url=None, api_key=None, timeout=60.0, max_attempts=3, backoff=1.0, max_in_flight=8,
            transport=None, sleep=time.sleep, seed=0,
        )
        kwargs.update(http_kwargs)
        self.http = _Http(**kwargs)
        self.model = model or os.environ.get(ENV_EMBED_MODEL, "e5-base-v2")
        self.batch_size = batch_size
        self.dim: int | None = None

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = _check_batch(texts)
        rows: list[list[float]] = []
        for i in range(0, len(texts), self.batch_size):
            body, _ = self.http.post("/embeddings", {"model": self.model, "input": texts[i : i + self.batch_size]})
            data = sorted(body.get("data", []), key=lambda d: d.get("index", 0))
            rows.extend(d["embedding"] for d in data)
        if len(rows) != len(texts):
            raise ProviderError(f"expected {len(texts)} embeddings, got {len(rows)}")
        dims = {len(r) for r in rows}
        if len(dims) != 1 or (self.dim is not None and dims != {self.dim}):
            raise DimensionMismatch(f"inconsistent embedding dimensions {sorted(dims)}")
        self.dim = dims.pop()
        return np.asarray(rows, dtype=np.float64)
