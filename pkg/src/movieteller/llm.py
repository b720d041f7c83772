"""Chat-completion clients: HTTP endpoint with retry/backoff and bounded
concurrency, plus a deterministic digest-keyed mock for offline runs."""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import requests

from .errors import ContextLengthExceeded, LLMError

DEFAULT_CONCURRENCY = 4

_CONTEXT_MARKERS = ("context_length_exceeded", "context length", "maximum context")


@dataclass(frozen=True)
class ChatRequest:
    model: str
    user_text: str
    system_text: Optional[str] = None
    image: Optional[bytes] = None  # encoded PNG/JPEG bytes
    temperature: float = 0.0
    max_tokens: int = 2048

    def __post_init__(self) -> None:
        if not self.user_text:
            raise LLMError("user_text must be non-empty")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency_ms: float = 0.0
    attempts: int = 1


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 4
    base_delay_s: float = 0.5
    multiplier: float = 2.0
    sleep: Callable[[float], None] = time.sleep

    def delay(self, attempt: int) -> float:
        return self.base_delay_s * self.multiplier ** attempt


def request_digest(request: ChatRequest) -> str:
    """Stable digest identifying a request's semantic content."""
    h = hashlib.sha256()
    h.update(request.model.encode())
    h.update(b"\x00")
    h.update((request.system_text or "").encode())
    h.update(b"\x00")
    h.update(request.user_text.encode())
    h.update(b"\x00")
    if request.image is not None:
        h.update(hashlib.sha256(request.image).digest())
    h.update(f"\x00{request.temperature}\x00{request.max_tokens}".encode())
    return h.hexdigest()


class ChatClient:
    """Shared surface: bounded-concurrency chat with a call counter."""

    def __init__(self, concurrency: int = DEFAULT_CONCURRENCY) -> None:
        if concurrency < 1:
            raise LLMError(f"concurrency must be >= 1, got {concurrency}")
        self.concurrency = concurrency
        self._semaphore = threading.BoundedSemaphore(concurrency)
        self._lock = threading.Lock()
        self.call_count = 0

    def chat(self, request: ChatRequest) -> ChatResponse:
        with self._semaphore:
            with self._lock:
                self.call_count += 1
            return self._chat(request)

    def _chat(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


def _is_context_error(status: int, body: str) -> bool:
    lowered = body.lower()
    return status == 400 and any(marker in lowered for marker in _CONTEXT_MARKERS)


class HttpChatClient(ChatClient):
    """Client for an OpenAI-style POST /v1/chat/completions endpoint.

    Transient failures (timeouts, 429, 5xx) are retried with exponential
    backoff; context-length errors surface immediately as their own class so
    the orchestrator can run an extra abstraction round.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str = "",
        policy: Optional[RetryPolicy] = None,
        concurrency: int = DEFAULT_CONCURRENCY,
        timeout: float = 120.0,
        post: Optional[Callable] = None,
    ) -> None:
        super().__init__(concurrency)
        self._url = endpoint.rstrip("/")
        if not self._url.endswith("/chat/completions"):
            self._url += "/v1/chat/completions"
        self._api_key = api_key
        self._policy = policy or RetryPolicy()
        self._timeout = timeout
        self._post = post or requests.post

    def _payload(self, request: ChatRequest) -> dict:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        if request.image is not None:
            data_url = "data:image/png;base64," + base64.b64encode(request.image).decode()
            content = [
                {"type": "text", "text": request.user_text},
                {"type": "image_url", "image_url": {"url": data_url}},
            ]
        else:
            content = request.user_text
        messages.append({"role": "user", "content": content})
        return {
            "model": request.model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def _chat(self, request: ChatRequest) -> ChatResponse:
        payload = self._payload(request)
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        start = time.monotonic()
        last_error = "no attempts made"
        for attempt in range(self._policy.max_attempts):
            if attempt > 0:
                self._policy.sleep(self._policy.delay(attempt - 1))
            try:
                resp = self._post(
                    self._url, json=payload, headers=headers, timeout=self._timeout
                )
            except requests.Timeout:
                last_error = "timeout"
                continue
            except requests.RequestException as exc:
                last_error = f"connection error: {exc}"
                continue
            if resp.status_code == 200:
                return self._parse(resp, attempt + 1, start)
            body = resp.text
            if _is_context_error(resp.status_code, body):
                raise ContextLengthExceeded(body[:300])
            if resp.status_code == 429 or resp.status_code >= 500:
                last_error = f"HTTP {resp.status_code}"
                continue
            raise LLMError(f"endpoint rejected request: HTTP {resp.status_code}: {body[:300]}")
        raise LLMError(
            f"request failed after {self._policy.max_attempts} attempts ({last_error})"
        )

    @staticmethod
    def _parse(resp, attempts: int, start: float) -> ChatResponse:
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LLMError(f"malformed endpoint reply: {exc}")
        if not isinstance(text, str) or not text:
            raise LLMError("endpoint reply has no message text")
        usage = data.get("usage", {}) or {}
        return ChatResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=(time.monotonic() - start) * 1000.0,
            attempts=attempts,
        )


class MockChatClient(ChatClient):
    """Deterministic offline client.

    Replies come from a transcript directory mapping request digests to reply
    files (<digest>.txt); unknown digests get the templated reply
    "MOCK:<digest>". An optional character budget makes oversized prompts
    raise ContextLengthExceeded, mirroring a real endpoint.
    """

    def __init__(
        self,
        transcript_dir: Optional[Path] = None,
        max_input_chars: Optional[int] = None,
        concurrency: int = DEFAULT_CONCURRENCY,
    ) -> None:
        super().__init__(concurrency)
        self._dir = Path(transcript_dir) if transcript_dir else None
        if self._dir is not None and not self._dir.is_dir():
            raise LLMError(f"transcript directory not readable: {self._dir}")
        self.max_input_chars = max_input_chars

    def _chat(self, request: ChatRequest) -> ChatResponse:
        size = len(request.user_text) + len(request.system_text or "")
        if self.max_input_chars is not None and size > self.max_input_chars:
            raise ContextLengthExceeded(
                f"prompt is {size} chars, mock budget {self.max_input_chars}"
            )
        digest = request_digest(request)
        if self._dir is not None:
            reply_file = self._dir / f"{digest}.txt"
            if reply_file.is_file():
                return ChatResponse(text=reply_file.read_text())
        return ChatResponse(text=f"MOCK:{digest}")


def mock_transcript(directory: Path, concurrency: int = DEFAULT_CONCURRENCY) -> MockChatClient:
    """Mock client answering by digest lookup in the given directory."""
    return MockChatClient(transcript_dir=directory, concurrency=concurrency)


def log_exchange(log_path: Path, request: ChatRequest, response: ChatResponse) -> None:
    """Append a JSONL record of one request/response pair (prompt by digest)."""
    record = {
        "digest": request_digest(request),
        "model": request.model,
        "prompt_chars": len(request.user_text),
        "has_image": request.image is not None,
        "reply_chars": len(response.text),
        "prompt_tokens": response.prompt_tokens,
        "completion_tokens": response.completion_tokens,
        "attempts": response.attempts,
    }
    with open(log_path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")
