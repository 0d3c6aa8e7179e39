"""Chat-completion and embedding clients over pluggable transports.

Three transports share one duck-typed surface (chat, chat_image, embed):

* LiveTransport speaks the de-facto standard chat-completions HTTP wire
  format against any compatible server (base_url + bearer token).
* ScriptedTransport replays ordered or keyed fixture responses and embeds
  text with a deterministic offline fallback, so every test runs without
  network access.
* RecordingTransport wraps another transport and captures traffic for
  later scripted replay.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import httpx
import numpy as np

VALID_ROLES = ("system", "user", "assistant")

DEFAULT_MAX_TOKENS = 4096
SUMMARY_MAX_TOKENS = 1024
FALLBACK_EMBED_DIM = 256
DEFAULT_MAX_INFLIGHT = 8


class TransportError(RuntimeError):
    """Transport-level failure; carries the request correlation id."""

    def __init__(self, message: str, request_id: str = ""):
        self.request_id = request_id
        super().__init__(f"{message} [request {request_id}]" if request_id else message)


class FixtureExhaustedError(TransportError):
    """A scripted transport ran out of fixture responses."""


class CapabilityError(TransportError):
    """The transport does not support the requested modality."""


@dataclass
class ChatRequest:
    messages: list[dict]
    temperature: float = 0.7
    max_tokens: int = DEFAULT_MAX_TOKENS
    model_id: str = "default"

    def __post_init__(self):
        if not self.messages:
            raise ValueError("request needs at least one message")
        for msg in self.messages:
            if msg.get("role") not in VALID_ROLES:
                raise ValueError(f"invalid role {msg.get('role')!r}")
            if "content" not in msg:
                raise ValueError("message missing content")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    def text_content(self) -> str:
        """Concatenated textual content of every message."""
        chunks = []
        for msg in self.messages:
            content = msg["content"]
            if isinstance(content, str):
                chunks.append(content)
            else:  # multimodal list
                for piece in content:
                    if isinstance(piece, dict) and piece.get("type") == "text":
                        chunks.append(piece.get("text", ""))
        return "\n".join(chunks)


@dataclass
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    request_id: str = ""


@dataclass
class Usage:
    """Cumulative (monotone) request/token accounting."""

    requests: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def add(self, prompt: int, completion: int) -> None:
        self.requests += 1
        self.prompt_tokens += max(0, prompt)
        self.completion_tokens += max(0, completion)


def fallback_embedding(text: str, dim: int = FALLBACK_EMBED_DIM) -> np.ndarray:
    """Deterministic hashed bag-of-words embedding, L2-normalized.

    A test double for offline runs: each lowercase word hashes to one of
    ``dim`` buckets (md5, stable across processes).
    """
    vec = np.zeros(dim)
    for word in text.lower().split():
        token = "".join(ch for ch in word if ch.isalnum())
        if not token:
            continue
        bucket = int(hashlib.md5(token.encode("utf-8")).hexdigest(), 16) % dim
        vec[bucket] += 1.0
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return vec / norm


class ScriptedTransport:
    """Deterministic fixture-backed transport.

    Responses come from ``keyed`` lists (first key found as a substring of
    the request text wins, in insertion order) or from the ``ordered``
    default queue. With ``repeat=True`` queues cycle instead of exhausting.
    """

    def __init__(
        self,
        ordered: list[str] | None = None,
        keyed: dict[str, list[str]] | None = None,
        embeddings: list[list[list[float]]] | None = None,
        repeat: bool = False,
        multimodal: bool = True,
    ):
        self.ordered = list(ordered or [])
        self.keyed = {k: list(v) for k, v in (keyed or {}).items()}
        self.embeddings = [list(batch) for batch in (embeddings or [])]
        self.repeat = repeat
        self.multimodal = multimodal
        self.usage = Usage()
        self.calls: list[ChatRequest] = []
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    def _next(self, queue_name: str, queue: list[str], request_id: str) -> str:
        index = self._counters.get(queue_name, 0)
        if index >= len(queue):
            if self.repeat and queue:
                index = index % len(queue)
            else:
                raise FixtureExhaustedError(
                    f"scripted fixtures exhausted for {queue_name!r} "
                    f"after {len(queue)} responses",
                    request_id,
                )
        self._counters[queue_name] = index + 1
        return queue[index]

    def chat(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            request_id = f"scripted-{self.usage.requests + 1}"
            self.calls.append(request)
            text_content = request.text_content()
            response_text = None
            for key, queue in self.keyed.items():
                if key in text_content:
                    response_text = self._next(f"keyed:{key}", queue, request_id)
                    break
            if response_text is None:
                response_text = self._next("ordered", self.ordered, request_id)
            prompt_tokens = len(text_content.split())
            completion_tokens = len(response_text.split())
            self.usage.add(prompt_tokens, completion_tokens)
            return ChatResponse(
                text=response_text,
                prompt_tokens=prompt_tokens,
                completion_tokens=completion_tokens,
                request_id=request_id,
            )

    def chat_image(self, request: ChatRequest, image: bytes) -> ChatResponse:
        if not self.multimodal:
            raise CapabilityError("scripted transport configured without multimodal support")
        if not image:
            raise ValueError("empty image payload")
        return self.chat(request)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        with self._lock:
            self.usage.add(sum(len(t.split()) for t in texts), 0)
            if self.embeddings:
                index = self._counters.get("embed", 0)
                if index >= len(self.embeddings):
                    if self.repeat:
                        index = index % len(self.embeddings)
                    else:
                        raise FixtureExhaustedError("scripted embeddings exhausted", "embed")
                self._counters["embed"] = index + 1
                batch = self.embeddings[index]
                if len(batch) != len(texts):
                    raise TransportError(
                        f"recorded embedding batch has {len(batch)} vectors, "
                        f"request has {len(texts)} texts",
                        "embed",
                    )
                return [np.asarray(v, dtype=float) for v in batch]
            return [fallback_embedding(t) for t in texts]

    @classmethod
    def from_capture(cls, records: list[dict] | str | Path, repeat: bool = False) -> "ScriptedTransport":
        """Build a replay transport from RecordingTransport output."""
        if isinstance(records, (str, Path)):
            lines = Path(records).read_text().splitlines()
            records = [json.loads(line) for line in lines if line.strip()]
        ordered = [r["response"] for r in records if r["kind"] in ("chat", "chat_image")]
        embeddings = [r["response"] for r in records if r["kind"] == "embed"]
        return cls(ordered=ordered, embeddings=embeddings, repeat=repeat)


class LiveTransport:
    """HTTP client for chat-completions style endpoints.

    Retries idempotently on transport errors and retryable statuses with
    exponential backoff (1s, 2s, 4s by default). Every request carries a
    correlation id surfaced in all errors.
    """

    RETRYABLE_STATUSES = (429, 500, 502, 503, 504)

    def __init__(
        self,
        base_url: str,
        api_key: str = "",
        embed_model_id: str = "",
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        multimodal: bool = True,
        max_inflight: int = DEFAULT_MAX_INFLIGHT,
        client: httpx.Client | None = None,
        sleep=time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.embed_model_id = embed_model_id
        self.max_retries = max_retries
        self.backoff = backoff
        self.multimodal = multimodal
        self.usage = Usage()
        self._sleep = sleep
        self._semaphore = threading.BoundedSemaphore(max_inflight)
        self._lock = threading.Lock()
        self._request_counter = 0
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = client or httpx.Client(timeout=timeout, headers=headers)

    def _request_id(self) -> str:
        with self._lock:
            self._request_counter += 1
            return f"live-{self._request_counter}"

    def _post(self, path: str, payload: dict, request_id: str) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.max_retries):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._semaphore:
                    response = self._client.post(self.base_url + path, json=payload)
            except httpx.TimeoutException as exc:
                last_error = exc
                continue
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code in self.RETRYABLE_STATUSES:
                last_error = TransportError(
                    f"HTTP {response.status_code} from {path}", request_id
                )
                continue
            if response.status_code != 200:
                raise TransportError(
                    f"HTTP {response.status_code} from {path}: {response.text[:200]}",
                    request_id,
                )
            return response.json()
        raise TransportError(
            f"request failed after {self.max_retries} attempts: {last_error}", request_id
        )

    def _chat_payload(self, request: ChatRequest) -> dict:
        return {
            "model": request.model_id,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def chat(self, request: ChatRequest) -> ChatResponse:
        request_id = self._request_id()
        doc = self._post("/chat/completions", self._chat_payload(request), request_id)
        try:
            text = doc["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {exc}", request_id)
        usage = doc.get("usage", {}) or {}
        prompt_tokens = int(usage.get("prompt_tokens", 0))
        completion_tokens = int(usage.get("completion_tokens", 0))
        self.usage.add(prompt_tokens, completion_tokens)
        return ChatResponse(
            text=text,
            prompt_tokens=prompt_tokens,
            completion_tokens=completion_tokens,
            request_id=request_id,
        )

    def chat_image(self, request: ChatRequest, image: bytes) -> ChatResponse:
        if not self.multimodal:
            raise CapabilityError("transport configured without multimodal support")
        if not image:
            raise ValueError("empty image payload")
        encoded = base64.b64encode(image).decode("ascii")
        data_url = f"data:image/png;base64,{encoded}"
        messages = [dict(m) for m in request.messages]
        for msg in reversed(messages):
            if msg["role"] == "user":
                msg["content"] = [
                    {"type": "text", "text": msg["content"]},
                    {"type": "image_url", "image_url": {"url": data_url}},
                ]
                break
        else:
            raise ValueError("chat_image request needs a user message")
        attached = ChatRequest(
            messages=messages,
            temperature=request.temperature,
            max_tokens=request.max_tokens,
            model_id=request.model_id,
        )
        return self.chat(attached)

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        request_id = self._request_id()
        payload = {"model": self.embed_model_id, "input": list(texts)}
        doc = self._post("/embeddings", payload, request_id)
        try:
            rows = sorted(doc["data"], key=lambda item: item.get("index", 0))
            vectors = [np.asarray(row["embedding"], dtype=float) for row in rows]
        except (KeyError, TypeError) as exc:
            raise TransportError(f"malformed embeddings response: {exc}", request_id)
        if len(vectors) != len(texts):
            raise TransportError(
                f"embeddings response has {len(vectors)} rows for {len(texts)} inputs",
                request_id,
            )
        usage = doc.get("usage", {}) or {}
        self.usage.add(int(usage.get("prompt_tokens", 0)), 0)
        return vectors


class RecordingTransport:
    """Wraps a transport, capturing traffic for scripted replay."""

    def __init__(self, inner, sink_path: str | Path | None = None):
        self.inner = inner
        self.records: list[dict] = []
        self.sink_path = Path(sink_path) if sink_path else None
        self._lock = threading.Lock()

    @property
    def usage(self) -> Usage:
        return self.inner.usage

    def _record(self, kind: str, request_payload, response_payload) -> None:
        record = {"kind": kind, "request": request_payload, "response": response_payload}
        with self._lock:
            self.records.append(record)
            if self.sink_path:
                with self.sink_path.open("a") as sink:
                    sink.write(json.dumps(record) + "\n")

    def chat(self, request: ChatRequest) -> ChatResponse:
        response = self.inner.chat(request)
        self._record("chat", request.text_content(), response.text)
        return response

    def chat_image(self, request: ChatRequest, image: bytes) -> ChatResponse:
        response = self.inner.chat_image(request, image)
        self._record("chat_image", request.text_content(), response.text)
        return response

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        vectors = self.inner.embed(texts)
        self._record("embed", list(texts), [v.tolist() for v in vectors])
        return vectors
