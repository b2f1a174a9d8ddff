"""Run configuration: INI file, environment, and flag overrides.

Values merge with file < environment < explicit overrides. The file is
flat INI with one section per stage; environment variables use the
RAGNOVA_<KEY> form for the handful of settings that make sense to
inject that way (workspace, backend, seed, credentials).
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .corpus import Workspace
from .errors import UsageError
from .gateway.backends import HttpBackend, RecordingBackend, ReplayBackend
from .gateway.embedding import EmbeddingVector, mock_embed
from .gateway.mock import MockChatBackend
from .gateway.store import ExchangeStore

BACKENDS = ("mock", "replay", "record", "live")

_ENV_KEYS = {
    "RAGNOVA_WORKSPACE": "workspace_path",
    "RAGNOVA_BACKEND": "backend",
    "RAGNOVA_SEED": "seed",
    "RAGNOVA_ENDPOINT": "endpoint",
    "RAGNOVA_API_KEY": "api_key",
    "RAGNOVA_MODEL": "model_id",
}

# (section, option) -> config field
_FILE_KEYS = {
    ("workspace", "path"): "workspace_path",
    ("workspace", "backend"): "backend",
    ("workspace", "seed"): "seed",
    ("gateway", "endpoint"): "endpoint",
    ("gateway", "api_key"): "api_key",
    ("gateway", "model_id"): "model_id",
    ("gateway", "embedding_model_id"): "embedding_model_id",
    ("gateway", "live_embeddings"): "live_embeddings",
    ("splitter", "strategy"): "strategy",
    ("splitter", "chunk_size"): "chunk_size",
    ("splitter", "overlap_ratio"): "overlap_ratio",
    ("splitter", "unit"): "chunk_unit",
    ("renovator", "mode"): "renovation",
    ("renovator", "constant"): "constant",
    ("renovator", "rag_context"): "renovation_rag",
    ("augmentor", "target"): "augment_target",
    ("augmentor", "budget"): "augment_budget",
    ("retrieval", "top_k"): "top_k",
    ("codegen", "planner"): "planner",
    ("codegen", "method"): "method",
    ("codegen", "ikec"): "ikec",
    ("codegen", "context_cap"): "context_cap",
    ("codegen", "comment_marker"): "comment_marker",
}


@dataclass(frozen=True)
class WorkspaceConfig:
    """Merged settings for one invocation."""

    workspace_path: str = "workspace"
    backend: str = "mock"
    seed: str = "0"
    endpoint: str = ""
    api_key: str = ""
    model_id: str = "default"
    embedding_model_id: str = ""
    live_embeddings: bool = False
    strategy: str = "semantic"
    chunk_size: int = 500
    overlap_ratio: float = 0.0
    chunk_unit: str = "chars"
    renovation: str = "full"
    constant: float = 0.0
    renovation_rag: bool = True
    augment_target: int = 2
    augment_budget: int = 5000
    top_k: int = 2
    planner: str = "chateda"
    method: str = "rag"
    ikec: bool = True
    context_cap: int = 6000
    comment_marker: str = "#"

    @classmethod
    def load(cls, config_path: str | Path | None = None,
             env: dict | None = None,
             overrides: dict | None = None) -> WorkspaceConfig:
        values: dict = {}
        if config_path is not None:
            values.update(_read_file(Path(config_path)))
        env = os.environ if env is None else env
        for env_key, name in _ENV_KEYS.items():
            if env_key in env:
                values[name] = env[env_key]
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**_coerce(values))

    def validate(self) -> None:
        if self.backend not in BACKENDS:
            raise UsageError(f"unknown backend {self.backend!r}; pick from {BACKENDS}")
        if self.backend == "replay" and not self.workspace().exchanges_path.exists():
            raise UsageError(
                f"replay backend needs a recorded exchange store at "
                f"{self.workspace().exchanges_path}")
        if self.backend in ("record", "live") and not self.endpoint:
            raise UsageError(f"backend {self.backend!r} requires an endpoint")
        if self.backend in ("record", "live") and not self.api_key:
            raise UsageError(f"backend {self.backend!r} requires an api key")

    def workspace(self) -> Workspace:
        return Workspace(self.workspace_path)

    def make_backend(self):
        """Build the configured chat/embedding backend (fail-fast checks)."""
        self.validate()
        workspace = self.workspace()
        if self.backend == "mock":
            return MockChatBackend()
        if self.backend == "replay":
            return ReplayBackend(ExchangeStore(workspace.exchanges_path))
        live = HttpBackend(endpoint=self.endpoint, api_key=self.api_key,
                           model_id=self.model_id,
                           embedding_model_id=self.embedding_model_id)
        if not self.live_embeddings:
            live = _MockEmbeddings(live)
        if self.backend == "record":
            return RecordingBackend(live, ExchangeStore(workspace.exchanges_path))
        return live

    def generation_snapshot(self) -> dict:
        """The per-task config snapshot stored with generated outputs."""
        return {
            "strategy": self.strategy,
            "renovation": self.renovation,
            "planner": self.planner,
            "method": self.method,
            "chunk_size": self.chunk_size,
            "top_k": self.top_k,
            "ikec": self.ikec,
            "constant": self.constant,
            "context_cap": self.context_cap,
            "seed": self.seed,
            "model_id": self.model_id,
        }


class _MockEmbeddings:
    """Live chat backend with deterministic local embeddings."""

    def __init__(self, inner):
        self._inner = inner
        self.backend_id = inner.backend_id

    def complete(self, request) -> str:
        return self._inner.complete(request)

    def embed(self, text: str) -> EmbeddingVector:
        return mock_embed(text)


def _read_file(path: Path) -> dict:
    if not path.exists():
        raise UsageError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise UsageError(f"bad config file {path}: {exc}") from exc
    values = {}
    for (section, option), name in _FILE_KEYS.items():
        if parser.has_option(section, option):
            values[name] = parser.get(section, option)
    return values


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(values: dict) -> dict:
    out = {}
    types = {f.name: f.type for f in fields(WorkspaceConfig)}
    for name, value in values.items():
        if name not in types:
            raise UsageError(f"unknown config key {name!r}")
        if isinstance(value, str):
            target = types[name]
            if target == "int":
                try:
                    value = int(value)
                except ValueError:
                    raise UsageError(f"config key {name!r} wants an integer, got {value!r}")
            elif target == "float":
                try:
                    value = float(value)
                except ValueError:
                    raise UsageError(f"config key {name!r} wants a number, got {value!r}")
            elif target == "bool":
                lowered = value.strip().lower()
                if lowered in _BOOL_TRUE:
                    value = True
                elif lowered in _BOOL_FALSE:
                    value = False
                else:
                    raise UsageError(f"config key {name!r} wants a boolean, got {value!r}")
        out[name] = value
    return out
