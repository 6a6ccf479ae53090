"""Provider-neutral client for chat-style multimodal model endpoints.

Two backends share one request shape: ``HttpBackend`` speaks the de-facto
chat-completions JSON protocol (messages array, images as base64 data
URLs), and ``ScriptedBackend`` serves canned responses keyed by request
tag for deterministic offline runs. ``Gateway`` adds a per-endpoint
concurrency ceiling and a thread-safe call log.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol, Union

import httpx
import jsonschema

from .errors import (
    InvalidInputError,
    ExtractionError,
    ProviderError,
    ScriptedFixtureMissing,
    TransportError,
)
from .reports import HazardCategory

logger = logging.getLogger(__name__)


class FinishReason(str, Enum):
    STOP = "stop"
    LENGTH = "length"
    ERROR = "error"


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"


Part = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class RequestTag:
    """Identifies a request for scripted lookup and call logging.

    ``frame`` is the anchor frame index; stages that are not anchored to a
    frame (incident detection, ensembling) use 0.
    """

    stage: str
    video_id: str
    frame: int = 0


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    backoff_base: float = 0.5

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise InvalidInputError(
                f"max_attempts must be >= 1, got {self.max_attempts}"
            )
        if self.backoff_base < 0:
            raise InvalidInputError(
                f"backoff_base must be >= 0, got {self.backoff_base}"
            )


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env: str = ""
    retry: RetryPolicy = field(default_factory=RetryPolicy)


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_parts: tuple[Part, ...]
    temperature: float = 0.0
    max_output_tokens: int = 2048
    timeout: float = 120.0
    tag: Optional[RequestTag] = None

    def __post_init__(self) -> None:
        if not self.user_parts:
            raise InvalidInputError("a chat request needs at least one user part")
        if self.temperature < 0:
            raise InvalidInputError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_output_tokens < 1:
            raise InvalidInputError(
                f"max_output_tokens must be >= 1, got {self.max_output_tokens}"
            )


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: FinishReason
    latency: float = 0.0

    def __post_init__(self) -> None:
        if self.finish_reason is FinishReason.STOP and not self.text:
            raise InvalidInputError("a completed response must carry text")


class Backend(Protocol):
    def complete(self, endpoint: EndpointConfig, request: ChatRequest) -> ChatResponse: ...


def _wire_messages(request: ChatRequest) -> list[dict]:
    content: list[dict] = []
    for part in request.user_parts:
        if isinstance(part, TextPart):
            content.append({"type": "text", "text": part.text})
        else:
            encoded = base64.b64encode(part.data).decode("ascii")
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:{part.media_type};base64,{encoded}"},
                }
            )
    messages = []
    if request.system_prompt:
        messages.append({"role": "system", "content": request.system_prompt})
    messages.append({"role": "user", "content": content})
    return messages


class HttpBackend:
    """Talks to a chat-completions endpoint over HTTP with retries.

    Transport failures and overload statuses (429, 5xx) are retried with
    exponential backoff up to the endpoint's max_attempts; other non-2xx
    statuses raise immediately. A model refusal is an ordinary completion
    and is never retried here.
    """

    RETRYABLE_STATUSES = frozenset({429} | set(range(500, 600)))

    def __init__(
        self,
        transport: Optional[httpx.BaseTransport] = None,
        sleeper=time.sleep,
    ) -> None:
        self._client = httpx.Client(transport=transport)
        self._sleep = sleeper

    def close(self) -> None:
        self._client.close()

    def complete(self, endpoint: EndpointConfig, request: ChatRequest) -> ChatResponse:
        url = endpoint.base_url.rstrip("/") + "/chat/completions"
        headers = {}
        if endpoint.api_key_env:
            key = os.environ.get(endpoint.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
            else:
                logger.warning(
                    "api key variable %s is unset; sending unauthenticated request",
                    endpoint.api_key_env,
                )
        body = {
            "model": endpoint.model_name,
            "messages": _wire_messages(request),
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }

        policy = endpoint.retry
        last_failure: Optional[BaseException] = None
        started = time.monotonic()
        for attempt in range(policy.max_attempts):
            if attempt:
                self._sleep(policy.backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post(
                    url, json=body, headers=headers, timeout=request.timeout
                )
            except httpx.TransportError as exc:
                last_failure = exc
                logger.warning("attempt %d to %s failed: %s", attempt + 1, url, exc)
                continue
            if response.status_code in self.RETRYABLE_STATUSES:
                last_failure = ProviderError(
                    response.status_code, _error_message(response)
                )
                logger.warning(
                    "attempt %d to %s got status %d",
                    attempt + 1, url, response.status_code,
                )
                continue
            if not (200 <= response.status_code < 300):
                raise ProviderError(response.status_code, _error_message(response))
            return _parse_completion(response, time.monotonic() - started)

        raise TransportError(
            f"request to {url} failed after {policy.max_attempts} attempt(s): "
            f"{last_failure}"
        ) from last_failure


def _error_message(response: httpx.Response) -> str:
    try:
        payload = response.json()
    except (json.JSONDecodeError, ValueError):
        return response.text[:500]
    if isinstance(payload, dict):
        err = payload.get("error")
        if isinstance(err, dict) and isinstance(err.get("message"), str):
            return err["message"]
        if isinstance(err, str):
            return err
    return response.text[:500]


def _parse_completion(response: httpx.Response, latency: float) -> ChatResponse:
    try:
        payload = response.json()
        choice = payload["choices"][0]
        message = choice.get("message") or {}
        text = message.get("content")
        raw_reason = choice.get("finish_reason", "stop")
    except (json.JSONDecodeError, ValueError, KeyError, IndexError, TypeError) as exc:
        raise ProviderError(
            response.status_code, f"malformed completion payload: {exc}"
        ) from exc
    if not isinstance(text, str) or not text:
        raise ProviderError(response.status_code, "completion carries no text")
    reason = {
        "stop": FinishReason.STOP,
        "length": FinishReason.LENGTH,
    }.get(raw_reason, FinishReason.ERROR)
    return ChatResponse(text=text, finish_reason=reason, latency=latency)


class ScriptedBackend:
    """Deterministic backend serving fixtures keyed by request tag.

    The key is (stage, video_id, frame) plus a per-key ordinal counting
    how many requests have used that key, so a re-prompt reads the next
    fixture in sequence. Fixtures come from an in-memory mapping of key to
    a list of response texts, or from a directory of JSON files named

        <stage>__<video_id>__<frame>__<ordinal>.json   (explicit ordinal)
        <stage>__<video_id>__<frame>.json              (ordinal 0 only)

    each containing {"text": ..., "finish_reason": "stop"|"length"}.
    A request with no tag, or with no fixture for its key, fails loudly.
    """

    def __init__(
        self,
        fixtures: Optional[dict[tuple[str, str, int], list[str]]] = None,
        fixtures_dir: Optional[Path] = None,
    ) -> None:
        self._fixtures = {k: list(v) for k, v in (fixtures or {}).items()}
        self._dir = Path(fixtures_dir) if fixtures_dir is not None else None
        self._counts: dict[tuple[str, str, int], int] = {}
        self._lock = threading.Lock()

    def complete(self, endpoint: EndpointConfig, request: ChatRequest) -> ChatResponse:
        tag = request.tag
        if tag is None:
            raise ScriptedFixtureMissing(
                "request carries no tag; the scripted backend cannot key it"
            )
        key = (tag.stage, tag.video_id, tag.frame)
        with self._lock:
            ordinal = self._counts.get(key, 0)
            self._counts[key] = ordinal + 1

        seq = self._fixtures.get(key)
        if seq is not None:
            if ordinal >= len(seq):
                raise ScriptedFixtureMissing(
                    f"no fixture for {key} ordinal {ordinal} "
                    f"(only {len(seq)} scripted)"
                )
            return self._respond(seq[ordinal], FinishReason.STOP)

        if self._dir is not None:
            stem = f"{tag.stage}__{tag.video_id}__{tag.frame}"
            candidates = [self._dir / f"{stem}__{ordinal}.json"]
            if ordinal == 0:
                candidates.append(self._dir / f"{stem}.json")
            for path in candidates:
                if path.is_file():
                    doc = json.loads(path.read_text(encoding="utf-8"))
                    reason = FinishReason(doc.get("finish_reason", "stop"))
                    return self._respond(doc["text"], reason)
            raise ScriptedFixtureMissing(
                f"no fixture file {candidates[0].name} in {self._dir}"
            )

        raise ScriptedFixtureMissing(f"no fixture for key {key} ordinal {ordinal}")

    @staticmethod
    def _respond(text: str, reason: FinishReason) -> ChatResponse:
        # mirror the HTTP backend: an empty completion is a provider fault
        if reason is FinishReason.STOP and not text:
            raise ProviderError(200, "completion carries no text")
        return ChatResponse(text=text, finish_reason=reason)


@dataclass(frozen=True)
class LoggedCall:
    tag: Optional[RequestTag]
    model_name: str
    finish_reason: FinishReason


class Gateway:
    """Front door for model calls: bounds per-endpoint concurrency and
    records every completed call for auditing."""

    def __init__(self, backend: Backend, max_parallel: int = 4) -> None:
        if max_parallel < 1:
            raise InvalidInputError(f"max_parallel must be >= 1, got {max_parallel}")
        self._backend = backend
        self._max_parallel = max_parallel
        self._limiters: dict[str, threading.BoundedSemaphore] = {}
        self._lock = threading.Lock()
        self._calls: list[LoggedCall] = []

    def _limiter(self, base_url: str) -> threading.BoundedSemaphore:
        with self._lock:
            limiter = self._limiters.get(base_url)
            if limiter is None:
                limiter = threading.BoundedSemaphore(self._max_parallel)
                self._limiters[base_url] = limiter
            return limiter

    def complete(self, endpoint: EndpointConfig, request: ChatRequest) -> ChatResponse:
        with self._limiter(endpoint.base_url):
            response = self._backend.complete(endpoint, request)
        with self._lock:
            self._calls.append(
                LoggedCall(
                    tag=request.tag,
                    model_name=endpoint.model_name,
                    finish_reason=response.finish_reason,
                )
            )
        return response

    @property
    def calls(self) -> tuple[LoggedCall, ...]:
        with self._lock:
            return tuple(self._calls)


_ENTITY_COUNTS_SCHEMA = {
    "type": "object",
    "required": ["vehicles", "pedestrians", "cyclists_or_scooters", "animals"],
    "properties": {
        key: {"type": "integer", "minimum": 0}
        for key in ("vehicles", "pedestrians", "cyclists_or_scooters", "animals")
    },
    "additionalProperties": False,
}

_REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "event_type",
        "crash_severity",
        "ego_involved",
        "entity_counts",
        "caption_before",
        "caption_after",
    ],
    "properties": {
        "event_type": {"enum": ["hazard", "accident", "no_incident"]},
        "crash_severity": {"type": "integer", "minimum": 0, "maximum": 4},
        "ego_involved": {"type": "boolean"},
        "entity_counts": _ENTITY_COUNTS_SCHEMA,
        "caption_before": {"type": "string"},
        "caption_after": {"type": "string"},
        "time_to_incident_frames": {
            "anyOf": [{"type": "integer", "minimum": 0}, {"type": "null"}]
        },
    },
}

SCHEMAS: dict[str, dict] = {
    "stage1": {
        "type": "object",
        "required": ["caption", "hazards"],
        "properties": {
            "caption": {"type": "string", "minLength": 1},
            "hazards": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["category", "description"],
                    "properties": {
                        "category": {"enum": [c.value for c in HazardCategory]},
                        "description": {"type": "string"},
                    },
                },
            },
        },
    },
    "stage2": {
        "type": "object",
        "required": ["incident_frame"],
        "properties": {
            "incident_frame": {"type": "integer"},
            "rationale": {"type": "string"},
        },
    },
    "stage3": _REPORT_SCHEMA,
    "ensemble": _REPORT_SCHEMA,
}


def _iter_json_objects(text: str):
    """Yield every parseable JSON object found in ``text``, left to right,
    including objects inside code fences or prose."""
    decoder = json.JSONDecoder()
    pos = 0
    while True:
        start = text.find("{", pos)
        if start < 0:
            return
        try:
            obj, end = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            pos = start + 1
            continue
        if isinstance(obj, dict):
            yield obj
            pos = end
        else:
            pos = start + 1


def extract_structured(text: str, schema_id: str) -> dict:
    """Return the first JSON object in ``text`` that validates against the
    named schema. Code fences and surrounding prose are tolerated."""
    try:
        schema = SCHEMAS[schema_id]
    except KeyError:
        raise InvalidInputError(
            f"unknown schema {schema_id!r}; known: {sorted(SCHEMAS)}"
        ) from None
    validator = jsonschema.Draft202012Validator(schema)
    saw_object = False
    for candidate in _iter_json_objects(text):
        saw_object = True
        if validator.is_valid(candidate):
            return candidate
    reason = (
        "no JSON object conforms to schema " + schema_id
        if saw_object
        else "no JSON object found in model output"
    )
    raise ExtractionError(reason, raw_text=text)
