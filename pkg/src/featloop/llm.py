"""Pluggable chat-completion backends.

Two implementations share one request shape: a generic HTTP backend
speaking the common chat-completions dialect (with retries, jittered
backoff and a token-bucket rate limit) and a deterministic simulated
backend whose output is a pure function of (seed, request).
"""

from __future__ import annotations

import os
import random
import threading
import time
from dataclasses import dataclass
from typing import Callable, Protocol

import requests

DEFAULT_RPS = 4.0
MAX_ATTEMPTS = 5
BACKOFF_BASE = 1.0
BACKOFF_FACTOR = 2.0
SENTINEL_TIMEOUT = 20.0
ARCHITECT_TIMEOUT = 60.0

ENV_API_BASE = "FL_API_BASE"
ENV_API_KEY = "FL_API_KEY"
ENV_SENTINEL_MODEL = "FL_SENTINEL_MODEL"
ENV_ARCHITECT_MODEL = "FL_ARCHITECT_MODEL"
ENV_RPS = "FL_RPS"


class BackendError(RuntimeError):
    """Base class for backend failures."""


class RateLimited(BackendError):
    """Throttled by the provider and retries are exhausted."""


class Transport(BackendError):
    """Connection-level or server-side failure."""


class Timeout(BackendError):
    """The request did not complete within the per-attempt timeout."""


class MalformedResponse(BackendError):
    """The provider answered but the body is not a usable completion."""


class AuthFailed(BackendError):
    """Credentials rejected; never retried."""


@dataclass(frozen=True)
class ChatRequest:
    system: str
    user: str
    temperature: float = 0.7
    max_output_tokens: int = 1024
    model: str = ""

    def __post_init__(self) -> None:
        if not self.user:
            raise ValueError("user message must be nonempty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature out of [0,2]: {self.temperature}")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    input_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


def complete(backend: Backend, request: ChatRequest) -> ChatResponse:
    return backend.complete(request)


class TokenBucket:
    """Thread-safe token bucket; acquire() blocks until a token is free."""

    def __init__(
        self,
        rate: float,
        capacity: float | None = None,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._stamp = clock()
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._stamp) * self.rate)
                self._stamp = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


# HTTP status classes: 429 and 5xx are worth another attempt, the rest are not.
def _retryable_status(status: int) -> bool:
    return status == 429 or status >= 500


class HttpBackend:
    """Chat-completions client for any endpoint speaking the common dialect.

    POSTs to `<base_url>/chat/completions` and reads the reply from
    `choices[0].message.content`.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        model: str = "",
        rps: float = DEFAULT_RPS,
        timeout: float = SENTINEL_TIMEOUT,
        max_attempts: int = MAX_ATTEMPTS,
        backoff_base: float = BACKOFF_BASE,
        backoff_factor: float = BACKOFF_FACTOR,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
        bucket: TokenBucket | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.model = model
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self._session = session or requests.Session()
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._bucket = bucket or TokenBucket(rps)

    def complete(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model or self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"

        started = time.monotonic()
        last_error: BackendError = Transport("no attempts made")
        for attempt in range(1, self.max_attempts + 1):
            self._bucket.acquire()
            try:
                resp = self._session.post(
                    f"{self.base_url}/chat/completions",
                    json=body,
                    headers=headers,
                    timeout=self.timeout,
                )
            except requests.Timeout:
                last_error = Timeout(f"attempt {attempt} timed out after {self.timeout}s")
            except requests.RequestException as exc:
                last_error = Transport(str(exc))
            else:
                if resp.status_code == 200:
                    return self._parse(resp, started)
                if resp.status_code in (401, 403):
                    raise AuthFailed(f"HTTP {resp.status_code}")
                if not _retryable_status(resp.status_code):
                    raise Transport(f"HTTP {resp.status_code}: {resp.text[:200]}")
                if resp.status_code == 429:
                    last_error = RateLimited("HTTP 429")
                else:
                    last_error = Transport(f"HTTP {resp.status_code}")
            if attempt < self.max_attempts:
                cap = self.backoff_base * self.backoff_factor ** (attempt - 1)
                self._sleep(self._rng.uniform(0.0, cap))  # full jitter
        raise last_error

    def _parse(self, resp: requests.Response, started: float) -> ChatResponse:
        try:
            payload = resp.json()
            text = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unusable completion body: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedResponse("completion content is not text")
        usage = payload.get("usage") or {}
        return ChatResponse(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            latency=time.monotonic() - started,
        )


# A behavior maps (request, seed) to the reply text; it must be pure.
Behavior = Callable[[ChatRequest, int], str]


class SimulatedBackend:
    """Deterministic backend for offline runs; counts calls for cache tests."""

    def __init__(self, seed: int, behavior: Behavior):
        self.seed = seed
        self.behavior = behavior
        self._count = 0
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return self._count

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self._count += 1
        text = self.behavior(request, self.seed)
        return ChatResponse(text=text, output_tokens=len(text.split()))


def simulated_backend(seed: int, behavior: Behavior) -> SimulatedBackend:
    return SimulatedBackend(seed, behavior)


def echo_behavior(request: ChatRequest, seed: int) -> str:
    return request.user


def backend_from_env(role: str = "sentinel") -> HttpBackend:
    """Build an HTTP backend from FL_* environment variables."""
    base = os.environ.get(ENV_API_BASE, "")
    if not base:
        raise ValueError(f"{ENV_API_BASE} is not set")
    if role == "architect":
        model = os.environ.get(ENV_ARCHITECT_MODEL, "")
        timeout = ARCHITECT_TIMEOUT
    else:
        model = os.environ.get(ENV_SENTINEL_MODEL, "")
        timeout = SENTINEL_TIMEOUT
    return HttpBackend(
        base_url=base,
        api_key=os.environ.get(ENV_API_KEY, ""),
        model=model,
        rps=float(os.environ.get(ENV_RPS, DEFAULT_RPS)),
        timeout=timeout,
    )
