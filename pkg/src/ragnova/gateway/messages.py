"""Chat request envelope, canonical serialization, and fingerprinting.

A request's fingerprint is the sha256 of its canonical JSON form. Canonical
form fixes the field order (lexicographic keys, compact separators) while
preserving message content byte-for-byte, so two serializations that differ
only in key order fingerprint identically and a single changed character in
any message changes the fingerprint.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any

ROLES = ("system", "user", "assistant")


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.role in ("system", "user") and not self.content:
            raise ValueError(f"{self.role} message content must be non-empty")


@dataclass(frozen=True)
class ChatRequest:
    """One chat-completion request. Temperature defaults to 0.0."""

    messages: tuple[ChatMessage, ...]
    model_id: str = "default"
    temperature: float = 0.0
    max_output_chars: int | None = None

    def __post_init__(self):
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_chars is not None and self.max_output_chars < 1:
            raise ValueError("max_output_chars must be positive or None")
        # A system message, if present, must come before any assistant turn.
        first_system = next(
            (i for i, m in enumerate(self.messages) if m.role == "system"), None
        )
        first_assistant = next(
            (i for i, m in enumerate(self.messages) if m.role == "assistant"), None
        )
        if (
            first_system is not None
            and first_assistant is not None
            and first_system > first_assistant
        ):
            raise ValueError("system message must precede assistant messages")


def request_to_dict(request: ChatRequest) -> dict[str, Any]:
    return {
        "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        "model_id": request.model_id,
        "temperature": request.temperature,
        "max_output_chars": request.max_output_chars,
    }


def request_from_dict(data: dict[str, Any]) -> ChatRequest:
    return ChatRequest(
        messages=tuple(
            ChatMessage(role=m["role"], content=m["content"]) for m in data["messages"]
        ),
        model_id=data.get("model_id", "default"),
        temperature=data.get("temperature", 0.0),
        max_output_chars=data.get("max_output_chars"),
    )


def canonical_json(request: ChatRequest) -> str:
    """Canonical serialization: sorted keys, compact separators, raw UTF-8.

    Content fields are byte-preserved; only the envelope's key order is
    normalized.
    """
    return json.dumps(
        request_to_dict(request),
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )


def fingerprint(request: ChatRequest) -> str:
    return hashlib.sha256(canonical_json(request).encode("utf-8")).hexdigest()


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass(frozen=True)
class ChatExchange:
    """One recorded request/response round-trip."""

    request_fingerprint: str
    request: dict[str, Any] = field(repr=False)
    response_text: str = field(repr=False)
    backend_id: str = "unknown"
    timestamp: str = ""

    @classmethod
    def capture(
        cls, request: ChatRequest, response_text: str, backend_id: str
    ) -> "ChatExchange":
        return cls(
            request_fingerprint=fingerprint(request),
            request=request_to_dict(request),
            response_text=response_text,
            backend_id=backend_id,
            timestamp=utc_now_iso(),
        )
