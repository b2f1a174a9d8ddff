"""Chat and embedding gateway: transports, record/replay store, mock backend."""

from .backends import Backend, CallCounter, HttpBackend, RecordingBackend, ReplayBackend
from .embedding import MOCK_DIMS, EmbeddingVector, cosine, mock_embed
from .messages import (
    ChatExchange,
    ChatMessage,
    ChatRequest,
    canonical_json,
    fingerprint,
    request_from_dict,
    request_to_dict,
)
from .mock import MockChatBackend
from .store import ExchangeStore

__all__ = [
    "Backend",
    "CallCounter",
    "ChatExchange",
    "ChatMessage",
    "ChatRequest",
    "EmbeddingVector",
    "ExchangeStore",
    "HttpBackend",
    "MOCK_DIMS",
    "MockChatBackend",
    "RecordingBackend",
    "ReplayBackend",
    "canonical_json",
    "cosine",
    "fingerprint",
    "mock_embed",
    "request_from_dict",
    "request_to_dict",
]
