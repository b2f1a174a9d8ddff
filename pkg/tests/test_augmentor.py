from __future__ import annotations

import pytest

from ragnova.augmentor import (
    DEFAULT_BUDGET,
    augment,
    augment_pool,
    AugmentationBatch,
    sample_scripts,
    script_payload,
)
from ragnova.corpus import Script, Workspace
from ragnova.errors import BudgetInfeasible, DegenerateOutput, TargetUnreached
from ragnova.gateway import MockChatBackend
from tests.conftest import ScriptedBackend


def _pool(sizes):
    return [Script(script_id=f"s{i}", source="original", text="x" * size)
            for i, size in enumerate(sizes)]


def test_batch_validation():
    with pytest.raises(ValueError):
        AugmentationBatch(sampled_script_ids=("a",), total_chars=10)
    with pytest.raises(ValueError):
        AugmentationBatch(sampled_script_ids=("a", "b"), total_chars=6000,
                          budget=5000)
    AugmentationBatch(sampled_script_ids=("a", "b", "c"), total_chars=100)


def test_sample_scripts_is_deterministic():
    pool = _pool([100, 200, 300, 400, 500])
    first = [s.script_id for s in sample_scripts(pool, "seed")]
    again = [s.script_id for s in sample_scripts(list(reversed(pool)), "seed")]
    assert first == again  # pool order does not matter
    other = [s.script_id for s in sample_scripts(pool, "other-seed")]
    assert 2 <= len(first) <= 3
    assert len(set(first)) == len(first)
    assert first != other or len(pool) <= 3


def test_sample_scripts_respects_budget():
    pool = _pool([3000, 2800, 2600, 100])
    for seed in range(20):
        picked = sample_scripts(pool, seed, budget=5000)
        assert sum(len(s.text) for s in picked) <= 5000
        assert len(picked) >= 2


def test_sample_scripts_smallest_pair_fallback():
    # Only the two smallest fit together, and never alongside a third.
    pool = _pool([4999, 2000, 2999])
    picked = sample_scripts(pool, 0, budget=5000)
    assert sorted(s.script_id for s in picked) == ["s1", "s2"]


def test_sample_scripts_infeasible():
    with pytest.raises(BudgetInfeasible):
        sample_scripts(_pool([4000, 3000, 2600]), 0, budget=5000)
    with pytest.raises(BudgetInfeasible):
        sample_scripts(_pool([10]), 0)


def test_script_payload_blocks():
    pool = [Script(script_id="a", source="original", text="line1\nline2"),
            Script(script_id="b", source="original", text="other")]
    payload = script_payload(pool)
    assert payload == ("[SCRIPT id=a]\nline1\nline2\n[/SCRIPT]\n"
                       "[SCRIPT id=b]\nother\n[/SCRIPT]")


def test_augment_produces_multi_parent_script():
    pool = [Script(script_id="a", source="original", text="import toolkit\nrun_a()"),
            Script(script_id="b", source="original", text="import toolkit\nrun_b()")]
    script = augment(pool, MockChatBackend())
    assert script.source == "augmented"
    assert script.parent_ids == ("a", "b")
    assert script.text not in {p.text for p in pool}
    again = augment(pool, MockChatBackend())
    assert again.script_id == script.script_id
    assert again.text == script.text


def test_augment_retries_degenerate_then_succeeds():
    pool = [Script(script_id="a", source="original", text="aaa"),
            Script(script_id="b", source="original", text="bbb")]
    backend = ScriptedBackend(["aaa", "fresh new script"])
    script = augment(pool, backend)
    assert script.text == "fresh new script"
    assert len(backend.requests) == 2
    assert "not acceptable" in backend.requests[1].messages[-1].content


def test_augment_gives_up_after_two_degenerate_replies():
    pool = [Script(script_id="a", source="original", text="aaa"),
            Script(script_id="b", source="original", text="bbb")]
    with pytest.raises(DegenerateOutput):
        augment(pool, ScriptedBackend(["aaa", ""]))


def test_augment_pool_persists_and_reports_shortfall(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    ws.put_scripts([Script(script_id="a", source="original", text="import x\nfoo()"),
                    Script(script_id="b", source="original", text="import y\nbar()")])
    produced = augment_pool(ws, 2, "0", MockChatBackend())
    assert len(produced) == 2
    stored = ws.get_scripts(source="augmented")
    assert {s.script_id for s in stored} == {s.script_id for s in produced}
    assert all(len(s.parent_ids) >= 2 for s in stored)

    # a backend that always echoes a parent never reaches the target,
    # but partial progress stays persisted
    ws2 = Workspace(tmp_path / "ws2")
    ws2.ensure_layout()
    ws2.put_scripts([Script(script_id="a", source="original", text="aaa"),
                     Script(script_id="b", source="original", text="bbb")])

    class EchoParent:
        backend_id = "echo"

        def complete(self, request):
            return "aaa"

        def embed(self, text):
            raise AssertionError("not used")

    with pytest.raises(TargetUnreached) as info:
        augment_pool(ws2, 2, "0", EchoParent())
    assert info.value.produced == 0
    assert info.value.target == 2
    assert ws2.get_scripts(source="augmented") == ()


def test_augment_pool_samples_only_originals(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    ws.put_scripts([
        Script(script_id="a", source="original", text="import x\nfoo()"),
        Script(script_id="b", source="original", text="import y\nbar()"),
        Script(script_id="z", source="augmented", text="zzz", parent_ids=("a", "b")),
    ])
    produced = augment_pool(ws, 1, "0", MockChatBackend())
    assert all(set(s.parent_ids) <= {"a", "b"} for s in produced)


def test_default_budget_value():
    assert DEFAULT_BUDGET == 5000
