"""Chat/embedding backends: live HTTP, deterministic replay, and recording.

All backends expose the same two calls:

    complete(request) -> response text
    embed(text)       -> EmbeddingVector (unit norm)

The replay backend serves completions from an ExchangeStore and embeddings
from the deterministic offline embedder, and never touches the network.
"""

from __future__ import annotations

import threading
import time
from typing import Protocol, runtime_checkable

import numpy as np

from ..errors import (
    EmptyText,
    MalformedBackendReply,
    NoRecordedResponse,
    TransportFailure,
)
from .embedding import EmbeddingVector, mock_embed
from .messages import ChatExchange, ChatRequest, fingerprint
from .store import ExchangeStore


@runtime_checkable
class Backend(Protocol):
    backend_id: str

    def complete(self, request: ChatRequest) -> str: ...

    def embed(self, text: str) -> EmbeddingVector: ...


def _finalize(request: ChatRequest, text: str) -> str:
    if request.max_output_chars is not None:
        return text[: request.max_output_chars]
    return text


class CallCounter:
    """Thread-safe tally of completions/embeddings served by a backend."""

    def __init__(self):
        self._lock = threading.Lock()
        self.completions = 0
        self.embeddings = 0

    def bump(self, what: str) -> None:
        with self._lock:
            if what == "complete":
                self.completions += 1
            else:
                self.embeddings += 1


class HttpBackend:
    """OpenAI-style chat-completions/embeddings client.

    Transport errors are retried `max_attempts` times with exponential
    backoff before TransportFailure surfaces. Concurrent callers are capped
    by `max_in_flight`.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None,
        model_id: str,
        embedding_model_id: str = "",
        *,
        backend_id: str = "live",
        timeout: float = 60.0,
        max_attempts: int = 3,
        backoff_start: float = 1.0,
        max_in_flight: int = 4,
    ):
        import requests

        self.endpoint = endpoint.rstrip("/")
        self.api_key = api_key
        self.model_id = model_id
        self.embedding_model_id = embedding_model_id or model_id
        self.backend_id = backend_id
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff_start = backoff_start
        self.calls = CallCounter()
        self._slots = threading.Semaphore(max_in_flight)
        self._session = requests.Session()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, path: str, payload: dict) -> dict:
        import requests

        last_err: Exception | None = None
        delay = self.backoff_start
        for attempt in range(self.max_attempts):
            if attempt:
                time.sleep(delay)
                delay *= 2
            try:
                with self._slots:
                    resp = self._session.post(
                        self.endpoint + path,
                        json=payload,
                        headers=self._headers(),
                        timeout=self.timeout,
                    )
                if resp.status_code >= 500:
                    last_err = TransportFailure(f"HTTP {resp.status_code}")
                    continue
                if resp.status_code >= 400:
                    raise TransportFailure(
                        f"HTTP {resp.status_code}: {resp.text[:200]}"
                    )
                return resp.json()
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_err = exc
        raise TransportFailure(f"giving up after {self.max_attempts} attempts: {last_err}")

    def complete(self, request: ChatRequest) -> str:
        self.calls.bump("complete")
        payload = {
            "model": request.model_id if request.model_id != "default" else self.model_id,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
        }
        body = self._post("/chat/completions", payload)
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedBackendReply(f"unexpected completion payload: {exc}") from exc
        if not isinstance(text, str):
            raise MalformedBackendReply("completion content is not a string")
        return _finalize(request, text)

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise EmptyText("cannot embed empty text")
        self.calls.bump("embed")
        body = self._post(
            "/embeddings", {"model": self.embedding_model_id, "input": text}
        )
        try:
            values = body["data"][0]["embedding"]
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedBackendReply(f"unexpected embedding payload: {exc}") from exc
        vec = EmbeddingVector(np.asarray(values, dtype=np.float64))
        return vec.normalized()


class ReplayBackend:
    """Serves completions from a recorded exchange store; no network, ever.

    Embeddings come from the deterministic offline embedder, which needs no
    recording because it is a pure function of the text.
    """

    def __init__(self, store: ExchangeStore, *, backend_id: str = "replay"):
        self.backend_id = backend_id
        self.store = store
        self.calls = CallCounter()
        self._responses = store.responses_by_fingerprint()

    def complete(self, request: ChatRequest) -> str:
        self.calls.bump("complete")
        fp = fingerprint(request)
        if fp not in self._responses:
            preview = request.messages[-1].content[:80]
            raise NoRecordedResponse(fp, preview)
        return _finalize(request, self._responses[fp])

    def embed(self, text: str) -> EmbeddingVector:
        self.calls.bump("embed")
        return mock_embed(text)


class RecordingBackend:
    """Wraps another backend and persists every completion exchange."""

    def __init__(self, inner: Backend, store: ExchangeStore):
        self.inner = inner
        self.store = store
        self.backend_id = f"record({inner.backend_id})"

    @property
    def calls(self) -> CallCounter:
        return self.inner.calls  # type: ignore[attr-defined]

    def complete(self, request: ChatRequest) -> str:
        text = self.inner.complete(request)
        self.store.append(ChatExchange.capture(request, text, self.inner.backend_id))
        return text

    def embed(self, text: str) -> EmbeddingVector:
        return self.inner.embed(text)
