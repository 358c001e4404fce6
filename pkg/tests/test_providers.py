import hashlib
import json
import threading
import time

import httpx
import numpy as np
import pytest

from mprbench.providers import (
    CompletionRequest,
    DimensionMismatch,
    HashingEmbedder,
    HttpError,
    NoRuleMatched,
    ProviderError,
    RemoteEmbedder,
    RemoteProvider,
    ScriptedProvider,
    ScriptedRule,
    Timeout,
)


def req(text="Question: Which city?\n", model="base", **kw):
    return CompletionRequest(model, (("user", text),), **kw)


def ok_body(text="Chicago", usage=True):
    body = {"choices": [{"message": {"role": "assistant", "content": text}}]}
    if usage:
        body["usage"] = {"prompt_tokens": 11, "completion_tokens": 1}
    return body


def remote(handler, **kw):
    return RemoteProvider(base_url="http://mock/v1", api_key="k", transport=httpx.MockTransport(handler),
                          sleep=lambda s: None, **kw)


# --- requests ------------------------------------------------------------------

def test_request_validation():
    with pytest.raises(ValueError):
        CompletionRequest("m", (("system", "hi"),))
    with pytest.raises(ValueError):
        req(temperature=-0.1)


# --- scripted ------------------------------------------------------------------

def test_scripted_rules_and_default():
    p = ScriptedProvider([ScriptedRule("Which city", ("Chicago", "Denver"))], default="UNKNOWN")
    assert p.complete(req()).text == "Chicago"
    assert p.complete(req()).text == "Denver"
    assert p.complete(req()).text == "Denver"
    assert p.complete(req("Question: who?\n")).text == "UNKNOWN"
    assert len(p.calls) == 4 and p.calls[0].estimated_tokens
    assert p.calls[0].prompt_tokens == 3 and p.calls[0].completion_tokens == 1


def test_scripted_no_rule_matched():
    with pytest.raises(NoRuleMatched):
        ScriptedProvider([ScriptedRule("x", ("y",))]).complete(req("nothing"))


def test_scripted_from_file(tmp_path):
    f = tmp_path / "script.json"
    f.write_text(json.dumps({"rules": [{"match": "city", "responses": ["Paris"]}], "default": "UNKNOWN"}))
    p = ScriptedProvider.from_file(f)
    assert p.complete(req()).text == "Paris" and p.complete(req("other")).text == "UNKNOWN"


# --- remote --------------------------------------------------------------------

def test_remote_success_and_payload():
    seen = {}

    def handler(request):
        seen["auth"] = request.headers["authorization"]
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        return httpx.Response(200, json=ok_body())

    p = remote(handler)
    out = p.complete(req(model="adapter-3", temperature=0.0, max_tokens=64))
    assert out.text == "Chicago" and out.attempts == 1
    assert (out.usage.prompt_tokens, out.usage.completion_tokens, out.usage.estimated) == (11, 1, False)
    assert seen["url"] == "http://mock/v1/chat/completions" and seen["auth"] == "Bearer k"
    assert seen["body"]["model"] == "adapter-3" and seen["body"]["max_tokens"] == 64
    assert p.calls[0].model == "adapter-3"


def test_remote_retries_server_errors():
    n = {"i": 0}

    def handler(request):
        n["i"] += 1
        return httpx.Response(500, text="boom") if n["i"] <= 2 else httpx.Response(200, json=ok_body())

    sleeps = []
    p = RemoteProvider(base_url="http://mock", transport=httpx.MockTransport(handler), sleep=sleeps.append)
    out = p.complete(req())
    assert out.attempts == 3 and n["i"] == 3 and len(sleeps) == 2
    assert 1.0 <= sleeps[0] <= 1.5 and 2.0 <= sleeps[1] <= 3.0


def test_remote_gives_up_after_max_attempts():
    p = remote(lambda r: httpx.Response(503, text="busy"))
    with pytest.raises(HttpError) as exc:
        p.complete(req())
    assert exc.value.status == 503 and p.http.attempt_log == [3]


def test_remote_client_error_not_retried():
    n = {"i": 0}

    def handler(request):
        n["i"] += 1
        return httpx.Response(400, text="bad request")

    with pytest.raises(HttpError):
        remote(handler).complete(req())
    assert n["i"] == 1


def test_remote_timeout():
    def handler(request):
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(Timeout):
        remote(handler).complete(req())


def test_remote_estimates_missing_usage():
    out = remote(lambda r: httpx.Response(200, json=ok_body("New York", usage=False))).complete(req())
    assert out.usage.estimated and out.usage.completion_tokens == 2 and out.usage.prompt_tokens == 3


def test_remote_malformed_body():
    with pytest.raises(ProviderError):
        remote(lambda r: httpx.Response(200, json={"choices": []})).complete(req())


def test_remote_requires_endpoint(monkeypatch):
    monkeypatch.delenv("MPR_BASE_URL", raising=False)
    monkeypatch.delenv("OPENAI_BASE_URL", raising=False)
    with pytest.raises(ProviderError):
        RemoteProvider()


def test_remote_in_flight_bound():
    active, peak, lock = [0], [0], threading.Lock()

    def handler(request):
        with lock:
            active[0] += 1
            peak[0] = max(peak[0], active[0])
        time.sleep(0.02)
        with lock:
            active[0] -= 1
        return httpx.Response(200, json=ok_body())

    p = remote(handler, max_in_flight=2)
    threads = [threading.Thread(target=p.complete, args=(req(),)) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak[0] <= 2 and len(p.calls) == 8


# --- embeddings ----------------------------------------------------------------

def test_remote_embedder_batches_and_orders():
    batches = []

    def handler(request):
        body = json.loads(request.content)
        batches.append(len(body["input"]))
        data = [{"index": i, "embedding": [float(len(t)), 1.0]} for i, t in enumerate(body["input"])]
        return httpx.Response(200, json={"data": list(reversed(data))})

    e = RemoteEmbedder(model="e5", batch_size=2, base_url="http://mock", transport=httpx.MockTransport(handler))
    out = e.embed(["a", "bbb", "cc"])
    assert batches == [2, 1]
    assert out[:, 0].tolist() == [1.0, 3.0, 2.0]


def test_remote_embedder_dimension_mismatch():
    dims = iter([2, 3])

    def handler(request):
        d = next(dims)
        return httpx.Response(200, json={"data": [{"index": 0, "embedding": [1.0] * d}]})

    e = RemoteEmbedder(base_url="http://mock", transport=httpx.MockTransport(handler))
    e.embed(["a"])
    with pytest.raises(DimensionMismatch):
        e.embed(["a"])


def _md5_bucket(tok, dim):
    return int(hashlib.md5(tok.encode()).hexdigest()[:16], 16) % dim


def test_hashing_embedder_against_manual_buckets():
    dim = 64
    e = HashingEmbedder(dim)
    v = e.embed(["Alice alice Bob"])[0]
    expected = np.zeros(dim)
    expected[_md5_bucket("alice", dim)] += 2
    expected[_md5_bucket("bob", dim)] += 1
    expected /= np.linalg.norm(expected)
    np.testing.assert_allclose(v, expected)
    a, b = e.embed(["Alice works", "Alice lives"])
    if len({_md5_bucket(t, dim) for t in ("alice", "works", "lives")}) == 3:
        assert a @ b == pytest.approx(0.5)
    assert float(e.embed([""])[0] @ e.embed([""])[0]) == 0.0
    with pytest.raises(ValueError):
        e.embed([])
