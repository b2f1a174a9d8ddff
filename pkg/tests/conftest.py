from __future__ import annotations

import hashlib
import shutil
from pathlib import Path

import pytest

from ragnova.config import WorkspaceConfig
from ragnova.gateway import mock_embed
from ragnova.pipeline import run_pipeline

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_WORKSPACE = REPO_ROOT / "fixtures" / "workspace"
PRELIMINARY_ANNOTATIONS = REPO_ROOT / "fixtures" / "preliminary_annotations.jsonl"


def digest_tree(root: Path) -> dict[str, str]:
    """Relative path -> sha256 for every file under root (lock excluded)."""
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != ".lock"
    }


class ScriptedBackend:
    """Serves canned replies in order and records every request."""

    backend_id = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        if not self.replies:
            raise AssertionError("scripted backend ran out of replies")
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply

    def embed(self, text):
        return mock_embed(text)


@pytest.fixture
def fixture_workspace(tmp_path):
    """Private copy of the shipped fixture workspace."""
    target = tmp_path / "workspace"
    shutil.copytree(FIXTURE_WORKSPACE, target)
    return target


@pytest.fixture(scope="session")
def replayed_workspace(tmp_path_factory):
    """Fixture workspace after one full replay pipeline run."""
    root = tmp_path_factory.mktemp("replayed") / "workspace"
    shutil.copytree(FIXTURE_WORKSPACE, root)
    run_pipeline(WorkspaceConfig(workspace_path=str(root), backend="replay"))
    return root
