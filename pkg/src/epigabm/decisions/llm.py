"""Chat-completions client with retry, client-side rate limiting and a disk cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import httpx

from ..core import ConfigError
from .parsing import parse_response
from .prompt import build_prompt
from .types import BackendError, DecisionContext, DecisionOutcome

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo-0301"
DEFAULT_API_BASE = "https://api.openai.com/v1"
DEFAULT_API_KEY_ENV = "OPENAI_API_KEY"


@dataclass(frozen=True)
class LLMConfig:
    api_base: str = DEFAULT_API_BASE
    model: str = DEFAULT_MODEL
    temperature: float | None = None
    api_key_env: str = DEFAULT_API_KEY_ENV
    max_attempts: int = 6
    backoff_base: float = 1.0
    backoff_max: float = 60.0
    timeout: float = 60.0
    requests_per_minute: float | None = None
    cache_dir: str | None = None
    max_concurrency: int = 8

    def __post_init__(self):
        if self.max_attempts < 1:
            raise ConfigError("must be >= 1", "llm.max_attempts")
        if self.requests_per_minute is not None and self.requests_per_minute <= 0:
            raise ConfigError("must be positive", "llm.requests_per_minute")
        if self.max_concurrency < 1:
            raise ConfigError("must be >= 1", "llm.max_concurrency")

    def api_key(self) -> str:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise ConfigError(f"environment variable {self.api_key_env} is not set", "llm.api_key_env")
        return key

    def to_dict(self) -> dict:
        return asdict(self)


class TokenBucket:
    """Blocking token bucket refilled at ``rate_per_minute``; safe across threads."""

    def __init__(self, rate_per_minute: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = rate_per_minute / 60.0
        self.capacity = capacity if capacity is not None else max(1.0, rate_per_minute / 60.0)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


def cache_key(prompt: str, model: str, temperature: float | None) -> str:
    blob = json.dumps({"prompt": prompt, "model": model, "temperature": temperature},
                      sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per request digest: ``<dir>/<sha256>.json``."""

    def __init__(self, directory: str | os.PathLike):
        self.dir = Path(directory)
        self.dir.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.dir / f"{key}.json"

    def get(self, key: str) -> dict | None:
        try:
            return json.loads(self._path(key).read_text(encoding="utf-8"))
        except FileNotFoundError:
            return None
        except (json.JSONDecodeError, UnicodeDecodeError):
            log.warning("ignoring unreadable cache entry %s", key)
            return None

    def put(self, key: str, entry: dict) -> None:
        path = self._path(key)
        tmp = path.with_suffix(f".{threading.get_ident()}.tmp")
        tmp.write_text(json.dumps(entry, ensure_ascii=False, indent=1), encoding="utf-8")
        os.replace(tmp, path)


@dataclass
class Usage:
    requests: int = 0
    cache_hits: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    retries: int = 0
    delays: list[float] = field(default_factory=list)


def _retry_after(resp: httpx.Response) -> float | None:
    value = resp.headers.get("retry-after")
    if value is None:
        return None
    try:
        return max(0.0, float(value))
    except ValueError:
        return None


class ChatClient:
    def __init__(self, config: LLMConfig, *, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, jitter: Callable[[], float] | None = None):
        self.config = config
        self._key = config.api_key()
        self._http = httpx.Client(timeout=config.timeout, transport=transport)
        self._sleep = sleep
        self._jitter = jitter or random.Random().random
        self._bucket = (TokenBucket(config.requests_per_minute, sleep=sleep)
                        if config.requests_per_minute else None)
        self.cache = ResponseCache(config.cache_dir) if config.cache_dir else None
        self.usage = Usage()
        self._lock = threading.Lock()

    def close(self) -> None:
        self._http.close()

    def _delay(self, attempt: int, server_hint: float | None, previous: float) -> float:
        # exponential with up to 25% jitter; doubling keeps the sequence non-decreasing
        d = min(self.config.backoff_max, self.config.backoff_base * 2 ** attempt * (1 + 0.25 * self._jitter()))
        if server_hint is not None:
            d = max(d, server_hint)
        return max(d, previous)

    def _post(self, body: dict) -> dict:
        url = self.config.api_base.rstrip("/") + "/chat/completions"
        headers = {"Authorization": f"Bearer {self._key}"}
        previous = 0.0
        last_error = "no attempt made"
        for attempt in range(self.config.max_attempts):
            if self._bucket:
                self._bucket.acquire()
            hint = None
            with self._lock:
                self.usage.requests += 1
            try:
                resp = self._http.post(url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last_error = f"transport error: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError:
                        last_error = "response body is not JSON"
                elif resp.status_code == 429 or resp.status_code >= 500:
                    hint = _retry_after(resp)
                    last_error = f"HTTP {resp.status_code}"
                else:
                    raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}", retryable=False)
            if attempt + 1 == self.config.max_attempts:
                break
            previous = self._delay(attempt, hint, previous)
            with self._lock:
                self.usage.retries += 1
                self.usage.delays.append(previous)
            log.info("retrying chat completion in %.2fs (%s)", previous, last_error)
            self._sleep(previous)
        raise BackendError(f"gave up after {self.config.max_attempts} attempts: {last_error}", retryable=True)

    def complete(self, prompt: str) -> str:
        cfg = self.config
        key = cache_key(prompt, cfg.model, cfg.temperature)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                with self._lock:
                    self.usage.cache_hits += 1
                return hit["response"]
        body = {"model": cfg.model, "messages": [{"role": "system", "content": prompt}]}
        if cfg.temperature is not None:
            body["temperature"] = cfg.temperature
        data = self._post(body)
        try:
            content = data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("malformed chat-completions payload", retryable=False) from None
        usage = data.get("usage") or {}
        with self._lock:
            self.usage.prompt_tokens += int(usage.get("prompt_tokens") or 0)
            self.usage.completion_tokens += int(usage.get("completion_tokens") or 0)
        content = content or ""
        if self.cache is not None:
            self.cache.put(key, {"model": cfg.model, "temperature": cfg.temperature,
                                 "prompt": prompt, "response": content, "usage": usage})
        return content


def llm_decide(ctx: DecisionContext, client: ChatClient) -> DecisionOutcome:
    return parse_response(client.complete(build_prompt(ctx)))
