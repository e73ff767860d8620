from __future__ import annotations

import threading

import pytest

from featloop.llm import (
    AuthFailed,
    ChatRequest,
    ChatResponse,
    HttpBackend,
    MalformedResponse,
    RateLimited,
    TokenBucket,
    Transport,
    backend_from_env,
    echo_behavior,
    simulated_backend,
)


def req(user="extract things", **kw):
    return ChatRequest(system="sys", user=user, **kw)


class TestChatRequest:
    def test_defaults(self):
        r = req()
        assert r.temperature == 0.7
        assert r.max_output_tokens == 1024

    def test_rejects_empty_user(self):
        with pytest.raises(ValueError):
            req(user="")

    @pytest.mark.parametrize("temp", [-0.1, 2.5])
    def test_rejects_temperature_out_of_range(self, temp):
        with pytest.raises(ValueError):
            req(temperature=temp)

    def test_rejects_nonpositive_token_budget(self):
        with pytest.raises(ValueError):
            req(max_output_tokens=0)


class TestTokenBucket:
    def test_burst_up_to_capacity_then_blocks(self):
        now = [0.0]
        sleeps = []

        def sleep(s):
            sleeps.append(s)
            now[0] += s

        bucket = TokenBucket(rate=2.0, clock=lambda: now[0], sleep=sleep)
        bucket.acquire()
        bucket.acquire()
        assert sleeps == []  # capacity 2 covers the burst
        bucket.acquire()
        assert sleeps == [pytest.approx(0.5)]

    def test_tokens_refill_with_time(self):
        now = [0.0]
        bucket = TokenBucket(rate=4.0, clock=lambda: now[0], sleep=lambda s: None)
        for _ in range(4):
            bucket.acquire()
        now[0] += 0.25  # one token's worth
        sleeps = []
        bucket._sleep = sleeps.append
        bucket.acquire()
        assert sleeps == []

    def test_rejects_nonpositive_rate(self):
        with pytest.raises(ValueError):
            TokenBucket(rate=0.0)


class _FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("not json")
        return self._payload


class _FakeSession:
    """Replays a scripted list of responses/exceptions and records calls."""

    def __init__(self, script):
        self.script = list(script)
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        step = self.script.pop(0)
        if isinstance(step, Exception):
            raise step
        return step


def _ok_payload(text="tags, here"):
    return {
        "choices": [{"message": {"content": text}}],
        "usage": {"prompt_tokens": 12, "completion_tokens": 3},
    }


def make_backend(script, **kw):
    session = _FakeSession(script)
    backend = HttpBackend(
        "http://api.test/v1",
        api_key="k",
        model="m-small",
        session=session,
        sleep=lambda s: None,
        rps=1e9,
        **kw,
    )
    return backend, session


class TestHttpBackend:
    def test_happy_path_parses_completion(self):
        backend, session = make_backend([_FakeResponse(200, _ok_payload("a, b"))])
        resp = backend.complete(req())
        assert resp == ChatResponse(
            text="a, b", input_tokens=12, output_tokens=3, latency=resp.latency
        )
        call = session.calls[0]
        assert call["url"] == "http://api.test/v1/chat/completions"
        assert call["headers"]["Authorization"] == "Bearer k"
        assert call["json"]["model"] == "m-small"
        assert call["json"]["messages"][1]["content"] == "extract things"

    def test_request_model_overrides_default(self):
        backend, session = make_backend([_FakeResponse(200, _ok_payload())])
        backend.complete(req(model="m-big"))
        assert session.calls[0]["json"]["model"] == "m-big"

    def test_retries_server_errors_until_success(self):
        backend, session = make_backend(
            [_FakeResponse(500), _FakeResponse(503), _FakeResponse(200, _ok_payload())]
        )
        assert backend.complete(req()).text == "tags, here"
        assert len(session.calls) == 3

    def test_rate_limit_exhaustion(self):
        backend, session = make_backend([_FakeResponse(429)] * 5)
        with pytest.raises(RateLimited):
            backend.complete(req())
        assert len(session.calls) == 5

    def test_auth_failure_is_not_retried(self):
        backend, session = make_backend([_FakeResponse(401)])
        with pytest.raises(AuthFailed):
            backend.complete(req())
        assert len(session.calls) == 1

    def test_client_error_is_not_retried(self):
        backend, session = make_backend([_FakeResponse(400, text="bad request")])
        with pytest.raises(Transport):
            backend.complete(req())
        assert len(session.calls) == 1

    def test_malformed_body_raises_immediately(self):
        backend, session = make_backend([_FakeResponse(200, {"choices": []})])
        with pytest.raises(MalformedResponse):
            backend.complete(req())
        assert len(session.calls) == 1

    def test_connection_errors_retry(self):
        import requests

        backend, session = make_backend(
            [requests.ConnectionError("refused"), _FakeResponse(200, _ok_payload())]
        )
        assert backend.complete(req()).text == "tags, here"
        assert len(session.calls) == 2

    def test_backoff_sleeps_within_exponential_caps(self):
        sleeps = []
        session = _FakeSession([_FakeResponse(500)] * 3 + [_FakeResponse(200, _ok_payload())])
        backend = HttpBackend(
            "http://api.test", session=session, sleep=sleeps.append, rps=1e9,
            backoff_base=1.0, backoff_factor=2.0,
        )
        backend.complete(req())
        assert len(sleeps) == 3
        for value, cap in zip(sleeps, (1.0, 2.0, 4.0)):
            assert 0.0 <= value <= cap


class TestSimulatedBackend:
    def test_deterministic_reply(self):
        backend = simulated_backend(3, echo_behavior)
        assert backend.complete(req("same")).text == "same"
        assert backend.complete(req("same")).text == "same"

    def test_counts_calls_across_threads(self):
        backend = simulated_backend(0, echo_behavior)
        threads = [
            threading.Thread(target=lambda: backend.complete(req()))
            for _ in range(16)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert backend.call_count == 16

    def test_behavior_receives_seed(self):
        seen = []

        def behavior(request, seed):
            seen.append(seed)
            return "x"

        simulated_backend(42, behavior).complete(req())
        assert seen == [42]


class TestBackendFromEnv:
    def test_requires_base_url(self, monkeypatch):
        monkeypatch.delenv("FL_API_BASE", raising=False)
        with pytest.raises(ValueError):
            backend_from_env()

    def test_role_selects_model_and_timeout(self, monkeypatch):
        monkeypatch.setenv("FL_API_BASE", "http://api.test")
        monkeypatch.setenv("FL_API_KEY", "secret")
        monkeypatch.setenv("FL_SENTINEL_MODEL", "fast")
        monkeypatch.setenv("FL_ARCHITECT_MODEL", "deep")
        sentinel = backend_from_env("sentinel")
        architect = backend_from_env("architect")
        assert (sentinel.model, architect.model) == ("fast", "deep")
        assert architect.timeout > sentinel.timeout
        assert sentinel.api_key == "secret"
