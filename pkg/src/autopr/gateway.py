"""Provider-agnostic chat-completion gateway.

One configured endpoint per model role (text synthesis, vision analysis,
combination, judge), retries with exponential backoff and full jitter,
write-once response caching keyed by content hash, and single-flight
coalescing of concurrent identical requests. The wire format is the
ubiquitous chat-completion JSON shape; images travel inline as base64 data
URLs with a high/low detail hint.

A rule-based mock transport is a first-class feature (the CLI exposes it as
``--mock-llm``) so the whole pipeline and harness run deterministically
without paid endpoints.
"""

from __future__ import annotations

import base64
import copy
import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import Future
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import httpx

from autopr.errors import (
    ConfigError,
    ConfigMissingRoleError,
    ExhaustedRetriesError,
    NotMultimodalEndpointError,
    ProviderError,
    ResponseEmptyError,
)
from autopr.tokens import estimate_tokens

logger = logging.getLogger(__name__)

__all__ = [
    "ModelRole",
    "TextPart",
    "ImagePart",
    "ChatMessage",
    "CompletionRequest",
    "CompletionResult",
    "EndpointConfig",
    "GatewayConfig",
    "RetryPolicy",
    "TransportFailure",
    "HttpChatTransport",
    "MockTransport",
    "load_mock_script",
    "LLMGateway",
    "derive_seed",
]


class ModelRole(str, Enum):
    TEXT_SYNTHESIS = "text-synthesis"
    VISION_ANALYSIS = "vision-analysis"
    COMBINATION = "combination"
    JUDGE = "judge"


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    """PNG payload plus the resolution hint forwarded to the endpoint."""

    data: bytes
    detail: str = "high"  # "high" | "low"

    @classmethod
    def from_file(cls, path: str | Path, detail: str = "high") -> "ImagePart":
        return cls(data=Path(path).read_bytes(), detail=detail)


@dataclass(frozen=True)
class ChatMessage:
    author: str  # "system" | "user"
    parts: tuple = ()

    def __post_init__(self):
        if self.author not in ("system", "user"):
            raise ValueError(f"unknown author {self.author!r}")
        if not self.parts:
            raise ValueError("message needs at least one part")


@dataclass(frozen=True)
class CompletionRequest:
    role: ModelRole
    messages: tuple
    temperature: float = 0.7
    max_output_tokens: int = 2048
    seed: int | None = None

    def __post_init__(self):
        if not (0 <= self.temperature <= 2):
            raise ValueError("temperature must be in [0, 2]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass
class CompletionResult:
    text: str
    input_token_estimate: int
    output_token_estimate: int
    latency_ms: int
    from_cache: bool


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model: str
    api_key_env: str = ""
    multimodal: bool = False
    timeout_s: float = 120.0
    rate_limit_per_s: float | None = None  # max requests per second, if set

    @property
    def endpoint_id(self) -> str:
        return f"{self.base_url}#{self.model}"


@dataclass
class GatewayConfig:
    endpoints: dict = field(default_factory=dict)  # ModelRole -> EndpointConfig

    @classmethod
    def from_file(cls, path: str | Path) -> "GatewayConfig":
        path = Path(path)
        text = path.read_text()
        if path.suffix.lower() == ".toml":
            try:
                import tomllib  # Python 3.11+
            except ImportError as exc:
                raise ConfigError(
                    "TOML endpoint config requires Python 3.11+; use JSON instead"
                ) from exc
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: dict) -> "GatewayConfig":
        endpoints = {}
        for role in ModelRole:
            entry = data.get(role.value) or data.get(role.value.replace("-", "_"))
            if entry is None:
                continue
            rate_limit = entry.get("rate_limit_per_s")
            endpoints[role] = EndpointConfig(
                base_url=entry["base_url"].rstrip("/"),
                model=entry["model"],
                api_key_env=entry.get("api_key_env", ""),
                multimodal=bool(
                    entry.get(
                        "multimodal",
                        role in (ModelRole.VISION_ANALYSIS, ModelRole.JUDGE),
                    )
                ),
                timeout_s=float(entry.get("timeout_s", 120.0)),
                rate_limit_per_s=float(rate_limit) if rate_limit else None,
            )
        return cls(endpoints=endpoints)

    @classmethod
    def mock_all_roles(cls) -> "GatewayConfig":
        """Config routing every role at a placeholder endpoint, for mock runs."""
        return cls(
            endpoints={
                role: EndpointConfig(
                    base_url="mock://local",
                    model=f"mock-{role.value}",
                    multimodal=role in (ModelRole.VISION_ANALYSIS, ModelRole.JUDGE),
                )
                for role in ModelRole
            }
        )


class TransportFailure(Exception):
    """Transport-level failure; ``retryable`` drives the retry policy."""

    def __init__(self, message: str, retryable: bool):
        super().__init__(message)
        self.retryable = retryable


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    base_delay_s: float = 1.0
    factor: float = 4.0

    def delay(self, attempt: int, rng: random.Random) -> float:
        """Full-jitter backoff before retry number ``attempt`` (1-based)."""
        return rng.uniform(0.0, self.base_delay_s * self.factor ** (attempt - 1))


def _encode_parts(parts) -> list[dict]:
    out = []
    for part in parts:
        if isinstance(part, TextPart):
            out.append({"type": "text", "text": part.text})
        elif isinstance(part, ImagePart):
            b64 = base64.b64encode(part.data).decode("ascii")
            out.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{b64}", "detail": part.detail},
                }
            )
        else:
            raise TypeError(f"unknown message part {type(part)!r}")
    return out


def build_payload(endpoint: EndpointConfig, req: CompletionRequest) -> dict:
    payload = {
        "model": endpoint.model,
        "messages": [
            {"role": m.author, "content": _encode_parts(m.parts)} for m in req.messages
        ],
        "temperature": req.temperature,
        "max_tokens": req.max_output_tokens,
    }
    if req.seed is not None:
        payload["seed"] = req.seed
    return payload


class HttpChatTransport:
    """POSTs chat-completion payloads to ``{base_url}/chat/completions``."""

    def __init__(self):
        self._client = httpx.Client()

    def send(self, endpoint: EndpointConfig, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key_env:
            key = os.environ.get(endpoint.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        try:
            response = self._client.post(
                f"{endpoint.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=endpoint.timeout_s,
            )
        except httpx.HTTPError as exc:
            raise TransportFailure(f"transport error: {exc}", retryable=True) from exc
        if response.status_code == 429 or response.status_code >= 500:
            raise TransportFailure(f"HTTP {response.status_code}", retryable=True)
        if response.status_code >= 400:
            raise TransportFailure(
                f"HTTP {response.status_code}: {response.text[:200]}", retryable=False
            )
        try:
            return response.json()
        except ValueError as exc:
            raise TransportFailure("non-JSON response body", retryable=False) from exc


def _payload_user_text(payload: dict) -> str:
    chunks = []
    for message in payload.get("messages", []):
        for part in message.get("content", []):
            if part.get("type") == "text":
                chunks.append(part["text"])
    return "\n".join(chunks)


def _last_user_text(payload: dict) -> str:
    for message in reversed(payload.get("messages", [])):
        if message.get("role") != "user":
            continue
        texts = [p["text"] for p in message.get("content", []) if p.get("type") == "text"]
        if texts:
            return texts[-1]
    return ""


class MockTransport:
    """Scripted stand-in for a chat endpoint.

    Script shape::

        {
          "rules": [
            {"role": "judge", "contains": "Hook", "response": {"text": "Score: 4"}},
            {"contains": "POST BODY", "response": {"extract_between": ["<<A", "B>>"]}},
            {"response": {"sequence": [{"status": 429}, {"text": "ok"}]}}
          ],
          "default": {"text": "mock output"}
        }

    The first matching rule answers. ``sequence`` entries are consumed one
    per call and stick at the last entry. ``{"status": N}`` simulates an
    HTTP failure (429/5xx retryable, other 4xx not). ``echo_last_user``
    returns the final text part of the last user message verbatim;
    ``extract_between`` returns the span between two markers in it.
    """

    def __init__(self, script: dict | None = None):
        script = script or {}
        self.rules = list(script.get("rules", []))
        self.default = script.get("default", {"text": ""})
        self.calls: list[dict] = []
        self._lock = threading.Lock()
        self._sequence_positions: dict[int, int] = {}

    def send(self, endpoint: EndpointConfig, payload: dict) -> dict:
        with self._lock:
            self.calls.append(copy.deepcopy(payload))
            spec = self._match(payload)
            text = self._realize(spec, payload)
        return {"choices": [{"message": {"content": text}}]}

    def _match(self, payload: dict) -> dict:
        haystack = _payload_user_text(payload)
        model = payload.get("model", "")
        for rule in self.rules:
            role = rule.get("role")
            if role is not None and f"mock-{role}" != model and role not in model:
                continue
            needle = rule.get("contains")
            if needle is not None and needle not in haystack:
                continue
            pattern = rule.get("regex")
            if pattern is not None and re.search(pattern, haystack) is None:
                continue
            return rule.get("response", {})
        return self.default

    def _realize(self, spec, payload: dict) -> str:
        if isinstance(spec, str):
            return spec
        if "sequence" in spec:
            seq = spec["sequence"]
            pos = self._sequence_positions.get(id(spec), 0)
            self._sequence_positions[id(spec)] = min(pos + 1, len(seq) - 1)
            return self._realize(seq[pos], payload)
        if "status" in spec:
            status = int(spec["status"])
            retryable = status == 429 or status >= 500
            raise TransportFailure(f"HTTP {status} (scripted)", retryable=retryable)
        if spec.get("echo_last_user"):
            return _last_user_text(payload)
        if "extract_between" in spec:
            start, end = spec["extract_between"]
            text = _last_user_text(payload)
            i = text.find(start)
            j = text.find(end, i + len(start)) if i >= 0 else -1
            if i < 0 or j < 0:
                return text
            return text[i + len(start) : j]
        return spec.get("text", "")


def load_mock_script(path: str | Path) -> MockTransport:
    return MockTransport(json.loads(Path(path).read_text()))


def derive_seed(base: int | None, tag: str) -> int | None:
    """Stable per-call seed from a run seed and a purpose tag."""
    if base is None:
        return None
    digest = hashlib.sha256(f"{base}:{tag}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def _hash_request(endpoint_id: str, req: CompletionRequest) -> str:
    hasher = hashlib.sha256()
    hasher.update(endpoint_id.encode())
    for message in req.messages:
        hasher.update(b"\x00m" + message.author.encode())
        for part in message.parts:
            if isinstance(part, TextPart):
                hasher.update(b"\x00t" + part.text.encode())
            else:
                hasher.update(b"\x00i" + part.detail.encode())
                hasher.update(hashlib.sha256(part.data).digest())
    hasher.update(f"\x00T{req.temperature!r}".encode())
    hasher.update(f"\x00M{req.max_output_tokens}".encode())
    hasher.update(f"\x00S{req.seed}".encode())
    return hasher.hexdigest()


class LLMGateway:
    """Thread-safe front door for every model call the pipeline makes."""

    def __init__(
        self,
        config: GatewayConfig,
        transport=None,
        *,
        cache_dir: str | Path | None = None,
        caching: bool = True,
        max_concurrency: int = 8,
        retry: RetryPolicy = RetryPolicy(),
        sleeper=time.sleep,
        jitter_rng: random.Random | None = None,
    ):
        self.config = config
        self.transport = transport if transport is not None else HttpChatTransport()
        self.cache_dir = Path(cache_dir) if cache_dir else None
        if self.cache_dir:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.caching = caching
        self.retry = retry
        self._sleep = sleeper
        self._rng = jitter_rng or random.Random()
        self._semaphore = threading.Semaphore(max_concurrency)
        self._memory_cache: dict[str, str] = {}
        self._inflight: dict[str, Future] = {}
        self._lock = threading.Lock()
        self._next_slot: dict[str, float] = {}  # endpoint id -> earliest send time

    # -- public surface --

    def complete(self, req: CompletionRequest) -> CompletionResult:
        endpoint = self._endpoint(req.role)
        if any(isinstance(p, ImagePart) for m in req.messages for p in m.parts):
            if not endpoint.multimodal:
                raise NotMultimodalEndpointError(
                    f"role {req.role.value} is not routed to a multimodal endpoint"
                )
        started = time.monotonic()
        key = self.cache_key(req)
        use_cache = self.caching and req.seed is not None

        if use_cache:
            cached = self._cache_get(key)
            if cached is not None:
                return self._result(req, cached, started, from_cache=True)
            future, owner = self._claim(key)
            if not owner:
                text = future.result()
                return self._result(req, text, started, from_cache=True)
            try:
                text = self._dispatch(endpoint, req)
                self._cache_put(key, text)
                future.set_result(text)
            except BaseException as exc:
                future.set_exception(exc)
                raise
            finally:
                with self._lock:
                    self._inflight.pop(key, None)
            return self._result(req, text, started, from_cache=False)

        text = self._dispatch(endpoint, req)
        return self._result(req, text, started, from_cache=False)

    def complete_with_images(self, req: CompletionRequest, images) -> CompletionResult:
        images = list(images)
        if not images:
            raise ValueError("complete_with_images requires at least one image part")
        endpoint = self._endpoint(req.role)
        if not endpoint.multimodal:
            raise NotMultimodalEndpointError(
                f"role {req.role.value} is not routed to a multimodal endpoint"
            )
        messages = list(req.messages)
        last = messages[-1]
        messages[-1] = ChatMessage(author=last.author, parts=tuple(last.parts) + tuple(images))
        return self.complete(replace(req, messages=tuple(messages)))

    def cache_key(self, req: CompletionRequest) -> str:
        return _hash_request(self._endpoint(req.role).endpoint_id, req)

    # -- internals --

    def _endpoint(self, role: ModelRole) -> EndpointConfig:
        endpoint = self.config.endpoints.get(role)
        if endpoint is None:
            raise ConfigMissingRoleError(f"no endpoint configured for role {role.value}")
        return endpoint

    def _claim(self, key: str) -> tuple[Future, bool]:
        with self._lock:
            future = self._inflight.get(key)
            if future is not None:
                return future, False
            future = Future()
            self._inflight[key] = future
            return future, True

    def _respect_rate_limit(self, endpoint: EndpointConfig) -> None:
        if not endpoint.rate_limit_per_s:
            return
        interval = 1.0 / endpoint.rate_limit_per_s
        with self._lock:
            now = time.monotonic()
            slot = max(self._next_slot.get(endpoint.endpoint_id, now), now)
            self._next_slot[endpoint.endpoint_id] = slot + interval
        wait = slot - time.monotonic()
        if wait > 0:
            self._sleep(wait)

    def _dispatch(self, endpoint: EndpointConfig, req: CompletionRequest) -> str:
        if not req.messages:
            raise ValueError("request has no messages")
        payload = build_payload(endpoint, req)
        last_failure: TransportFailure | None = None
        for attempt in range(1, self.retry.attempts + 1):
            try:
                self._respect_rate_limit(endpoint)
                with self._semaphore:
                    response = self.transport.send(endpoint, payload)
                break
            except TransportFailure as failure:
                if not failure.retryable:
                    raise ProviderError(str(failure)) from failure
                last_failure = failure
                if attempt < self.retry.attempts:
                    delay = self.retry.delay(attempt, self._rng)
                    logger.debug(
                        "retryable failure (%s), attempt %d/%d, sleeping %.2fs",
                        failure,
                        attempt,
                        self.retry.attempts,
                        delay,
                    )
                    self._sleep(delay)
        else:
            raise ExhaustedRetriesError(
                f"{self.retry.attempts} attempts failed: {last_failure}"
            ) from last_failure

        try:
            text = response["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed endpoint response: {response!r}") from exc
        if not isinstance(text, str) or text == "":
            raise ResponseEmptyError("endpoint returned empty text")
        return text

    def _result(
        self, req: CompletionRequest, text: str, started: float, *, from_cache: bool
    ) -> CompletionResult:
        request_chars = "".join(
            part.text for m in req.messages for part in m.parts if isinstance(part, TextPart)
        )
        return CompletionResult(
            text=text,
            input_token_estimate=estimate_tokens(request_chars),
            output_token_estimate=estimate_tokens(text),
            latency_ms=int((time.monotonic() - started) * 1000),
            from_cache=from_cache,
        )

    def _cache_path(self, key: str) -> Path:
        assert self.cache_dir is not None
        return self.cache_dir / f"{key}.json"

    def _cache_get(self, key: str) -> str | None:
        with self._lock:
            if key in self._memory_cache:
                return self._memory_cache[key]
        if self.cache_dir:
            path = self._cache_path(key)
            if path.exists():
                text = json.loads(path.read_text())["text"]
                with self._lock:
                    self._memory_cache.setdefault(key, text)
                return text
        return None

    def _cache_put(self, key: str, text: str) -> None:
        with self._lock:
            if key in self._memory_cache:  # write-once
                return
            self._memory_cache[key] = text
        if self.cache_dir:
            path = self._cache_path(key)
            if not path.exists():
                tmp = path.with_suffix(".tmp")
                tmp.write_text(json.dumps({"text": text}))
                tmp.replace(path)
