from __future__ import annotations

import pytest

from ragnova.config import WorkspaceConfig
from ragnova.errors import UsageError
from ragnova.gateway import MockChatBackend, ReplayBackend

INI = """\
[workspace]
path = /from/file
backend = mock
seed = 11

[splitter]
strategy = fixed
chunk_size = 250
overlap_ratio = 0.25

[renovator]
mode = no-gate
constant = -0.5
rag_context = off

[codegen]
ikec = no
context_cap = 1234
"""


def test_defaults():
    cfg = WorkspaceConfig()
    assert cfg.backend == "mock"
    assert cfg.strategy == "semantic"
    assert cfg.chunk_size == 500
    assert cfg.renovation == "full"
    assert cfg.top_k == 2
    assert cfg.ikec is True


def test_file_values_are_parsed_and_coerced(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(INI, encoding="utf-8")
    cfg = WorkspaceConfig.load(path, env={})
    assert cfg.workspace_path == "/from/file"
    assert cfg.seed == "11"
    assert cfg.strategy == "fixed"
    assert cfg.chunk_size == 250
    assert cfg.overlap_ratio == 0.25
    assert cfg.renovation == "no-gate"
    assert cfg.constant == -0.5
    assert cfg.renovation_rag is False
    assert cfg.ikec is False
    assert cfg.context_cap == 1234


def test_precedence_file_env_flags(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text(INI, encoding="utf-8")
    env = {"RAGNOVA_WORKSPACE": "/from/env", "RAGNOVA_SEED": "22"}
    cfg = WorkspaceConfig.load(path, env=env)
    assert cfg.workspace_path == "/from/env"
    assert cfg.seed == "22"

    cfg = WorkspaceConfig.load(path, env=env,
                               overrides={"workspace_path": "/from/flag",
                                          "backend": None})
    assert cfg.workspace_path == "/from/flag"
    assert cfg.backend == "mock"  # None override is ignored


def test_unknown_and_malformed_values(tmp_path):
    with pytest.raises(UsageError):
        WorkspaceConfig.load(tmp_path / "missing.ini", env={})
    with pytest.raises(UsageError):
        WorkspaceConfig.load(env={}, overrides={"no_such_key": "x"})
    with pytest.raises(UsageError):
        WorkspaceConfig.load(env={}, overrides={"chunk_size": "many"})
    with pytest.raises(UsageError):
        WorkspaceConfig.load(env={}, overrides={"ikec": "maybe"})
    bad = tmp_path / "bad.ini"
    bad.write_text("not an ini file [", encoding="utf-8")
    with pytest.raises(UsageError):
        WorkspaceConfig.load(bad, env={})


def test_validate_backend_requirements(tmp_path):
    with pytest.raises(UsageError):
        WorkspaceConfig(backend="teleport").validate()
    # replay needs a recorded store
    cfg = WorkspaceConfig(workspace_path=str(tmp_path / "ws"), backend="replay")
    with pytest.raises(UsageError):
        cfg.validate()
    # record/live need credentials
    with pytest.raises(UsageError):
        WorkspaceConfig(backend="record").validate()
    with pytest.raises(UsageError):
        WorkspaceConfig(backend="live", endpoint="http://x").validate()


def test_make_backend_mock_and_replay(tmp_path, fixture_workspace):
    assert isinstance(WorkspaceConfig(
        workspace_path=str(tmp_path)).make_backend(), MockChatBackend)
    replay = WorkspaceConfig(workspace_path=str(fixture_workspace),
                             backend="replay").make_backend()
    assert isinstance(replay, ReplayBackend)


def test_generation_snapshot_is_complete():
    snap = WorkspaceConfig(seed="7", top_k=3).generation_snapshot()
    assert snap["seed"] == "7"
    assert snap["top_k"] == 3
    for key in ("strategy", "renovation", "planner", "method", "chunk_size",
                "ikec", "constant", "context_cap", "model_id"):
        assert key in snap
