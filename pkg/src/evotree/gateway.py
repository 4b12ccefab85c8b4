"""LLM gateway: request/response types, backends, tracing, accounting.

Every agent call in the engine flows through Gateway.complete, which
validates the request, retries transport failures with exponential
backoff, appends one record per call to trace.jsonl, and accumulates
per-role word counts of assistant text (the basis of the contribution
breakdown in run reports).

Two backends ship:

* ScriptedBackend: deterministic rule table for offline runs and tests.
  Rules match on a tag glob and/or a message substring. In strict mode
  every request must match exactly one rule, otherwise the call fails
  with ScriptMiss so a drifting pipeline is caught immediately.
* HttpBackend: provider-agnostic chat-completions client. Credentials
  come from an environment variable and are never written anywhere.
"""

from __future__ import annotations

import fnmatch
import json
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Protocol

import httpx

from .errors import EngineError, ScriptMiss, TransportError, ValidationError

VALID_MESSAGE_ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatRequest:
    """One chat completion request.

    temperature None means the field is omitted from the provider
    payload entirely (the selector ensemble runs without one).
    The tag identifies the call site as "<agent role>/<detail...>" and
    is the key for tracing and word-count attribution.
    """

    model: str
    messages: tuple[dict[str, str], ...]
    tag: str
    temperature: float | None = None
    max_tokens: int | None = None

    def __post_init__(self):
        if not self.model:
            raise ValidationError("request model must be non-empty")
        if not self.tag:
            raise ValidationError("request tag must be non-empty")
        if not self.messages:
            raise ValidationError("request must carry at least one message")
        object.__setattr__(self, "messages", tuple(dict(m) for m in self.messages))
        for message in self.messages:
            if set(message) != {"role", "content"}:
                raise ValidationError(f"message must have exactly role and content keys: {message!r}")
            if message["role"] not in VALID_MESSAGE_ROLES:
                raise ValidationError(f"unknown message role: {message['role']!r}")
            if not isinstance(message["content"], str):
                raise ValidationError("message content must be a string")
        if self.messages[0]["role"] != "system":
            raise ValidationError("first message must be the system message")
        if self.temperature is not None and not 0.0 <= self.temperature <= 1.0:
            raise ValidationError(f"temperature must be in [0, 1], got {self.temperature}")
        if self.max_tokens is not None and self.max_tokens <= 0:
            raise ValidationError("max_tokens must be positive")

    @property
    def role(self) -> str:
        return self.tag.split("/", 1)[0]

    def request_chars(self) -> int:
        return sum(len(m["content"]) for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    token_counts: dict[str, int] = field(default_factory=dict)
    latency_ms: float = 0.0


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


@dataclass(frozen=True)
class ScriptRule:
    """One scripted response. Matches when both conditions hold.

    Exactly one of response/response_file carries the reply text;
    response_file is resolved when the script file is loaded.
    """

    response: str
    tag: str | None = None
    contains: str | None = None
    name: str | None = None

    def matches(self, request: ChatRequest) -> bool:
        if self.tag is not None and not fnmatch.fnmatchcase(request.tag, self.tag):
            return False
        if self.contains is not None:
            joined = "\n".join(m["content"] for m in request.messages)
            if self.contains not in joined:
                return False
        return True

    def label(self) -> str:
        return self.name or f"tag={self.tag!r} contains={self.contains!r}"


class ScriptedBackend:
    """Deterministic mock backend driven by an ordered rule table."""

    def __init__(self, rules: list[ScriptRule], strict: bool = True):
        self.rules = list(rules)
        self.strict = strict
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: Path) -> "ScriptedBackend":
        """Load a script from JSON: {"strict": bool, "rules": [...]}.

        Each rule object carries tag/contains/name plus either
        "response" (inline text) or "response_file" (path relative to
        the script file).
        """
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot load script {path}: {exc}") from exc
        if not isinstance(doc, dict) or not isinstance(doc.get("rules"), list):
            raise ValidationError(f"script {path} must be an object with a 'rules' array")
        rules = []
        for i, rec in enumerate(doc["rules"]):
            if not isinstance(rec, dict):
                raise ValidationError(f"script {path} rule #{i} must be an object")
            has_inline = "response" in rec
            has_file = "response_file" in rec
            if has_inline == has_file:
                raise ValidationError(f"script {path} rule #{i} needs exactly one of response/response_file")
            if has_file:
                response = (path.parent / rec["response_file"]).read_text()
            else:
                response = rec["response"]
            rules.append(
                ScriptRule(
                    response=response,
                    tag=rec.get("tag"),
                    contains=rec.get("contains"),
                    name=rec.get("name"),
                )
            )
        return cls(rules, strict=bool(doc.get("strict", True)))

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(request)
        matched = [rule for rule in self.rules if rule.matches(request)]
        if self.strict and len(matched) != 1:
            labels = ", ".join(r.label() for r in matched) or "none"
            raise ScriptMiss(
                f"strict script: request tag {request.tag!r} matched {len(matched)} rules ({labels})"
            )
        if not matched:
            text = f"[unscripted response for {request.tag}]"
        else:
            text = matched[0].response
        return ChatResponse(
            text=text,
            token_counts={"prompt": request.request_chars() // 4, "completion": len(text) // 4},
            latency_ms=0.0,
        )


class HttpBackend:
    """Minimal chat-completions client over HTTP.

    The API key is read from the named environment variable at call
    time and the engine never persists it. A custom httpx transport can
    be injected for tests.
    """

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "LLM_API_KEY",
        timeout_s: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.api_key_env = api_key_env
        self._client = httpx.Client(timeout=timeout_s, transport=transport)

    def complete(self, request: ChatRequest) -> ChatResponse:
        import os

        payload: dict = {
            "model": request.model,
            "messages": [dict(m) for m in request.messages],
        }
        if request.temperature is not None:
            payload["temperature"] = request.temperature
        if request.max_tokens is not None:
            payload["max_tokens"] = request.max_tokens

        headers = {}
        api_key = os.environ.get(self.api_key_env)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"

        started = time.perf_counter()
        try:
            response = self._client.post(
                f"{self.base_url}/chat/completions", json=payload, headers=headers
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"transport failure for {request.tag}: {exc}") from exc
        latency_ms = (time.perf_counter() - started) * 1000.0

        if response.status_code == 429 or response.status_code >= 500:
            raise TransportError(f"retryable status {response.status_code} for {request.tag}")
        if response.status_code >= 400:
            raise EngineError(f"backend rejected {request.tag}: {response.status_code} {response.text[:500]}")
        try:
            doc = response.json()
            text = doc["choices"][0]["message"]["content"]
        except (ValueError, LookupError, TypeError) as exc:
            raise TransportError(f"malformed backend payload for {request.tag}: {exc}") from exc
        usage = doc.get("usage") or {}
        token_counts = {
            "prompt": int(usage.get("prompt_tokens", 0)),
            "completion": int(usage.get("completion_tokens", 0)),
        }
        return ChatResponse(text=text, token_counts=token_counts, latency_ms=latency_ms)


class Gateway:
    """Single entry point for agent calls: retry, trace, account."""

    def __init__(
        self,
        backend: Backend,
        trace_path: Path | None = None,
        retries: int = 3,
        backoff_s: float = 1.0,
        sleep=time.sleep,
    ):
        if retries < 1:
            raise ValidationError("retries must be >= 1")
        self.backend = backend
        self.trace_path = Path(trace_path) if trace_path else None
        self.retries = retries
        self.backoff_s = backoff_s
        self._sleep = sleep
        self._lock = threading.Lock()
        self._word_counts: dict[str, int] = {}
        self.call_count = 0

    def complete(self, request: ChatRequest) -> ChatResponse:
        started = time.perf_counter()
        last_error: TransportError | None = None
        response: ChatResponse | None = None
        for attempt in range(1, self.retries + 1):
            try:
                response = self.backend.complete(request)
                break
            except TransportError as exc:
                last_error = exc
                if attempt < self.retries:
                    self._sleep(self.backoff_s * (2 ** (attempt - 1)))
        if response is None:
            raise TransportError(
                f"backend failed after {self.retries} attempts for {request.tag}: {last_error}"
            )

        latency_ms = response.latency_ms or (time.perf_counter() - started) * 1000.0
        record = {
            "tag": request.tag,
            "model": request.model,
            "temperature": request.temperature,
            "request_chars": request.request_chars(),
            "response_chars": len(response.text),
            "latency_ms": round(latency_ms, 3),
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        with self._lock:
            self.call_count += 1
            role = request.role
            self._word_counts[role] = self._word_counts.get(role, 0) + len(response.text.split())
            if self.trace_path is not None:
                self.trace_path.parent.mkdir(parents=True, exist_ok=True)
                with self.trace_path.open("a") as fh:
                    fh.write(json.dumps(record) + "\n")
        return response

    def word_counts(self) -> dict[str, int]:
        """Words of assistant text accumulated per agent role."""
        with self._lock:
            return dict(self._word_counts)
