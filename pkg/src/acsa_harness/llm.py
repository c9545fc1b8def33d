"""Chat-completion client with content-addressed caching.

One wire shape (OpenAI-compatible chat completions) covers both
open-weight servers and proxied proprietary endpoints. Responses are
cached in an append-only directory of one JSON file per request hash,
written atomically; the replay backend reads fixture files in exactly
the cache format, which makes whole runs bit-deterministic offline.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Protocol

import requests


class LlmError(Exception):
    pass


class AuthError(LlmError):
    pass


class RateLimited(LlmError):
    pass


class TransportError(LlmError):
    pass


class BackendRefused(LlmError):
    pass


class MissingFixture(LlmError):
    pass


class CacheCorrupt(LlmError):
    pass


class GreedyViolation(LlmError):
    """A non-greedy request was rejected before dispatch (strict mode)."""


@dataclass(frozen=True)
class DecodeParams:
    temperature: float = 0.0
    top_p: float = 1.0
    max_output_tokens: int = 4096

    @classmethod
    def greedy(cls, max_output_tokens: int = 4096) -> "DecodeParams":
        return cls(0.0, 1.0, max_output_tokens)

    @property
    def is_greedy(self) -> bool:
        return self.temperature == 0.0 and self.top_p == 1.0


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    system: str
    user: str
    params: DecodeParams = DecodeParams()

    def canonical_json(self) -> str:
        payload = {
            "model_id": self.model_id,
            "system": self.system,
            "user": self.user,
            "params": {
                "temperature": self.params.temperature,
                "top_p": self.params.top_p,
                "max_output_tokens": self.params.max_output_tokens,
            },
        }
        return json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=True)

    @property
    def cache_key(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend: str  # "http" | "replay" | "cache"
    latency_ms: float
    request_hash: str


@dataclass(frozen=True)
class WarmSummary:
    hits: int
    misses: int
    fetched: int
    failures: tuple[tuple[str, str], ...] = ()


class Backend(Protocol):
    name: str

    def complete(self, request: ChatRequest) -> str: ...


def _text_sha256(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def cache_payload(request: ChatRequest, text: str) -> dict:
    return {
        "schema_version": 1,
        "request_hash": request.cache_key,
        "request": json.loads(request.canonical_json()),
        "response": {"text": text, "text_sha256": _text_sha256(text)},
    }


def write_cache_file(path: Path, request: ChatRequest, text: str) -> None:
    """Atomically persist one request/response pair in the cache format."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f"{path.name}.tmp.{os.getpid()}.{threading.get_ident()}")
    tmp.write_text(
        json.dumps(cache_payload(request, text), sort_keys=True, indent=1), "utf-8"
    )
    os.replace(tmp, path)


def read_cache_file(path: Path, expected_hash: str) -> str:
    """Load and verify one cache/fixture file, returning the response text."""
    try:
        payload = json.loads(path.read_text("utf-8"))
    except (OSError, json.JSONDecodeError) as err:
        raise CacheCorrupt(f"{path}: unreadable cache file ({err})") from err
    if payload.get("request_hash") != expected_hash:
        raise CacheCorrupt(f"{path}: stored request hash does not match {expected_hash}")
    response = payload.get("response") or {}
    text = response.get("text")
    if not isinstance(text, str):
        raise CacheCorrupt(f"{path}: missing response text")
    if _text_sha256(text) != response.get("text_sha256"):
        raise CacheCorrupt(f"{path}: response text does not match its stored hash")
    return text


class HttpBackend:
    """OpenAI-compatible chat-completions endpoint over HTTPS.

    Rate-limit responses are retried with exponential backoff up to
    max_retries; auth failures and other refusals surface immediately.
    """

    name = "http"

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        timeout: float = 120.0,
        max_retries: int = 5,
        backoff_base: float = 1.0,
        session: requests.Session | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._session = session or requests.Session()
        self._sleep = sleep

    def complete(self, request: ChatRequest) -> str:
        url = f"{self.base_url}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        payload = {
            "model": request.model_id,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.params.temperature,
            "top_p": request.params.top_p,
            "max_tokens": request.params.max_output_tokens,
        }
        attempt = 0
        while True:
            try:
                resp = self._session.post(url, json=payload, headers=headers, timeout=self.timeout)
            except requests.RequestException as err:
                raise TransportError(f"request failed: {err}") from err
            if resp.status_code in (401, 403):
                raise AuthError(f"HTTP {resp.status_code} from {url}")
            if resp.status_code == 429:
                attempt += 1
                if attempt > self.max_retries:
                    raise RateLimited(f"still rate-limited after {self.max_retries} retries")
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
                continue
            if 400 <= resp.status_code < 500:
                raise BackendRefused(f"HTTP {resp.status_code}: {resp.text[:200]}")
            if resp.status_code >= 500:
                raise TransportError(f"HTTP {resp.status_code} from {url}")
            try:
                body = resp.json()
                text = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as err:
                raise TransportError(f"malformed completion payload: {err}") from err
            if not isinstance(text, str):
                raise TransportError("completion content is not a string")
            return text


class ReplayBackend:
    """Serves recorded responses keyed by request hash from a fixture dir."""

    name = "replay"

    def __init__(self, fixture_dir: str | Path):
        self.fixture_dir = Path(fixture_dir)

    def complete(self, request: ChatRequest) -> str:
        path = self.fixture_dir / f"{request.cache_key}.json"
        if not path.exists():
            raise MissingFixture(
                f"no fixture for request hash {request.cache_key} in {self.fixture_dir}"
            )
        return read_cache_file(path, request.cache_key)


class ChatClient:
    """Cache-first chat interface, shareable across worker threads.

    The cache is consulted by request hash before any backend call; on a
    miss, at most one in-flight backend call runs per distinct hash and
    the response is persisted before returning.
    """

    def __init__(
        self,
        backend: Backend,
        cache_dir: str | Path | None = None,
        strict_greedy: bool = False,
        max_concurrency: int = 4,
    ):
        self.backend = backend
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.strict_greedy = strict_greedy
        self.max_concurrency = max_concurrency
        self._guard = threading.Lock()
        self._inflight: dict[str, threading.Lock] = {}

    def _cache_path(self, key: str) -> Path | None:
        if self.cache_dir is None:
            return None
        return self.cache_dir / f"{key}.json"

    def _cache_lookup(self, key: str) -> str | None:
        path = self._cache_path(key)
        if path is None or not path.exists():
            return None
        return read_cache_file(path, key)

    def _key_lock(self, key: str) -> threading.Lock:
        with self._guard:
            return self._inflight.setdefault(key, threading.Lock())

    def chat(self, request: ChatRequest) -> ChatResponse:
        if self.strict_greedy and not request.params.is_greedy:
            raise GreedyViolation(
                f"non-greedy decode params rejected: temperature="
                f"{request.params.temperature}, top_p={request.params.top_p}"
            )
        key = request.cache_key
        cached = self._cache_lookup(key)
        if cached is not None:
            return ChatResponse(cached, "cache", 0.0, key)
        with self._key_lock(key):
            cached = self._cache_lookup(key)
            if cached is not None:
                return ChatResponse(cached, "cache", 0.0, key)
            start = time.perf_counter()
            text = self.backend.complete(request)
            latency_ms = (time.perf_counter() - start) * 1000.0
            path = self._cache_path(key)
            if path is not None:
                write_cache_file(path, request, text)
            return ChatResponse(text, self.backend.name, latency_ms, key)

    def warm_cache(self, requests_in: Iterable[ChatRequest]) -> WarmSummary:
        """Fetch every miss with bounded parallelism; idempotent."""
        unique: dict[str, ChatRequest] = {}
        for request in requests_in:
            unique.setdefault(request.cache_key, request)
        hits = {k for k in unique if self._cache_lookup(k) is not None}
        misses = [request for k, request in unique.items() if k not in hits]
        fetched = 0
        failures: list[tuple[str, str]] = []
        if misses:
            with ThreadPoolExecutor(max_workers=self.max_concurrency) as pool:
                futures = {pool.submit(self.chat, r): r for r in misses}
                for future, request in futures.items():
                    try:
                        future.result()
                        fetched += 1
                    except LlmError as err:
                        failures.append((request.cache_key, f"{type(err).__name__}: {err}"))
        return WarmSummary(len(hits), len(misses), fetched, tuple(failures))
