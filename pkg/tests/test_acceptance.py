"""End-to-end acceptance checks.

Each test pins one externally stated guarantee: metric values, oracle
equivalence against independent recomputations, and replay determinism of
the full pipeline. Oracles here are written from the documented contracts,
not from the package internals.
"""

from __future__ import annotations

import math
import random
import re
import shutil
import time
from fractions import Fraction

import numpy as np

from ragnova.cli import main as cli_main
from ragnova.codegen import GenerationTask, run_task
from ragnova.config import WorkspaceConfig
from ragnova.corpus import Workspace, read_jsonl
from ragnova.evaluator import LineAnnotation, aggregate, pcl
from ragnova.gateway import (
    ExchangeStore,
    MockChatBackend,
    RecordingBackend,
    mock_embed,
)
from ragnova.pipeline import stage_split
from ragnova.prompt_forge import default_forge
from ragnova.renovator import CorpusStats, RenovationRecord, compute_stats, decide
from ragnova.retrieval import IndexEntry, VectorIndex, query
from ragnova.splitter import normalize_ws, split_fixed

from conftest import FIXTURE_WORKSPACE, PRELIMINARY_ANNOTATIONS, digest_tree


def _record(i, conf, grow):
    return RenovationRecord(chunk_id=f"c{i}", pre_text="pre", post_text="post",
                            entities=(), conf=conf, grow=grow)


def _z_oracle(value, values):
    """Population z-score by direct summation; zero spread pins z to 0."""
    if len(set(values)) == 1:
        return 0.0
    n = len(values)
    mean = math.fsum(values) / n
    std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / n)
    return (value - mean) / std


def _close(got, want):
    return math.isclose(got, want, rel_tol=1e-12, abs_tol=1e-12)


def test_line_accuracy_worked_examples():
    start = time.perf_counter()
    assert abs(pcl(LineAnnotation("a", 29, 4)) * 100 - 86.21) <= 0.01
    assert abs(pcl(LineAnnotation("b", 29, 2)) * 100 - 93.10) <= 0.01
    assert time.perf_counter() - start < 1.0


def test_line_accuracy_aggregate_is_exact_mean():
    start = time.perf_counter()
    rows = read_jsonl(PRELIMINARY_ANNOTATIONS)
    assert len(rows) == 5
    annotations = [LineAnnotation(r["task_id"], r["total"], r["errors"])
                   for r in rows]
    report = aggregate(annotations)
    values = [pcl(a) for a in annotations]
    exact = sum(Fraction(v) for v in values) / len(values)
    assert report.mean_pcl == float(exact)
    assert abs(report.mean_pcl * 100 - 73.33) <= 0.01
    assert time.perf_counter() - start < 1.0


def test_adoption_decisions_match_bruteforce_oracle():
    rng = random.Random(20260823)
    start = time.perf_counter()
    decisions = 0
    for _ in range(1000):
        n = rng.randint(2, 50)
        confs = [rng.randint(0, 100) / 10 for _ in range(n)]
        grows = [rng.uniform(-0.5, 5.0) for _ in range(n)]
        constant = rng.uniform(-3.0, 3.0)
        records = [_record(i, c, g) for i, (c, g) in enumerate(zip(confs, grows))]
        stats = compute_stats(records, constant)
        for rec in records:
            got = decide(rec, stats)
            want_c = _z_oracle(rec.conf, confs)
            want_g = _z_oracle(rec.grow, grows)
            assert _close(got.cdiff, want_c)
            assert _close(got.gdiff, want_g)
            want = "accepted" if want_c - want_g >= constant else "rejected"
            assert got.accepted == want
            decisions += 1
    assert decisions >= 2000
    assert time.perf_counter() - start < 10.0


def test_adoption_threshold_sweep_is_monotone():
    rng = random.Random(7)
    start = time.perf_counter()
    flips = 0
    for trial in range(10_000):
        rec = _record(trial, rng.randint(0, 100) / 10, rng.uniform(-0.5, 5.0))
        spread = dict(
            mean_conf=rng.uniform(0.0, 10.0),
            std_conf=0.0 if trial % 10 == 0 else rng.uniform(0.0, 2.0),
            mean_grow=rng.uniform(-0.5, 5.0),
            std_grow=0.0 if trial % 7 == 0 else rng.uniform(0.0, 2.0),
        )
        low = rng.uniform(-3.0, 3.0)
        high = low + rng.uniform(0.0, 2.0)
        at_low = decide(rec, CorpusStats(constant=low, **spread))
        at_high = decide(rec, CorpusStats(constant=high, **spread))
        if at_low.accepted == "rejected" and at_high.accepted == "accepted":
            flips += 1
    assert flips == 0
    assert time.perf_counter() - start < 5.0


def test_uniform_corpora_pin_zscores_to_zero():
    rng = random.Random(99)
    start = time.perf_counter()
    for i in range(100):
        n = rng.randint(2, 12)
        if i % 2 == 0:
            confs = [rng.randint(0, 100) / 10] * n
            grows = [rng.uniform(-0.5, 5.0) for _ in range(n)]
        else:
            confs = [rng.randint(0, 100) / 10 for _ in range(n)]
            grows = [rng.uniform(-0.5, 5.0)] * n
        constant = rng.uniform(-3.0, 3.0)
        records = [_record(j, c, g) for j, (c, g) in enumerate(zip(confs, grows))]
        stats = compute_stats(records, constant)
        for rec in records:
            got = decide(rec, stats)
            if i % 2 == 0:
                assert got.cdiff == 0.0
            else:
                assert got.gdiff == 0.0
            want = "accepted" if got.cdiff - got.gdiff >= constant else "rejected"
            assert got.accepted == want
    assert time.perf_counter() - start < 1.0


def test_semantic_split_preserves_content_across_pages(tmp_path):
    work = tmp_path / "workspace"
    shutil.copytree(FIXTURE_WORKSPACE, work)
    cfg = WorkspaceConfig(workspace_path=str(work), backend="replay")
    ws = cfg.workspace()
    ws.ensure_layout()
    start = time.perf_counter()
    stage_split(ws, cfg, cfg.make_backend())
    for doc in ws.list_documents():
        chunks = [c for c in ws.get_chunks("main") if c.doc_id == doc.doc_id]
        assert chunks
        got = normalize_ws(" ".join(c.text for c in chunks))
        want = normalize_ws(" ".join(p.text for p in doc.pages))
        assert got == want
    guide = ws.get_document("toolkit-guide")
    assert len(guide.pages) == 50
    spanning = [c for c in ws.get_chunks("main")
                if c.doc_id == "toolkit-guide" and c.page_span[0] < c.page_span[1]]
    assert spanning, "carryover threading produced no two-page chunk"
    assert time.perf_counter() - start < 5.0


def test_fixed_split_matches_position_oracle():
    rng = random.Random(4242)
    alphabet = "ab cde\nfg "
    start = time.perf_counter()
    for _ in range(1000):
        n = rng.randint(0, 300)
        text = "".join(rng.choice(alphabet) for _ in range(n))
        size = rng.randint(1, 60)
        ratio = rng.random() * 0.95
        got = split_fixed(text, size, ratio)
        if n == 0:
            assert got == []
            continue
        overlap = math.floor(size * ratio)
        stride = size - overlap
        starts = [0]
        while starts[-1] + size < n:
            starts.append(starts[-1] + stride)
        assert got == [text[s:s + size] for s in starts]
        assert all(len(c) == size for c in got[:-1])
        assert 1 <= len(got[-1]) <= size
        assert all(b - a == stride for a, b in zip(starts, starts[1:]))
        # coverage: overlapped tails stitch back into the full text
        assert got[0] + "".join(c[overlap:] for c in got[1:]) == text
    assert time.perf_counter() - start < 5.0


def test_retrieval_matches_bruteforce_scan():
    backend = MockChatBackend()
    vocabulary = ("mesh", "route", "power", "timing", "clock", "layer",
                  "export", "scan", "grid", "report", "thermal", "drc")
    pool = [f"{a} {b} step {i}" for i, (a, b) in enumerate(
        (x, y) for x in vocabulary for y in vocabulary)]
    vectors = [mock_embed(t) for t in pool]
    rng = random.Random(11)
    start = time.perf_counter()
    for _ in range(1000):
        n = rng.randint(1, 500)
        ids = [f"c{j:03d}" for j in rng.sample(range(1000), n)]
        picks = [rng.randrange(len(pool)) for _ in range(n)]
        entries = [IndexEntry(chunk_id=i, embedding=vectors[p],
                              text_chars=len(pool[p]))
                   for i, p in zip(ids, picks)]
        index = VectorIndex(entries)
        text = pool[rng.randrange(len(pool))]
        k = rng.randint(1, 8)
        hits = query(index, text, k, backend)

        qv = mock_embed(text).values
        qn = qv / np.sqrt(np.dot(qv, qv))
        scored = sorted(
            ((float(np.sum(e.embedding.values * qn)), e.chunk_id)
             for e in entries),
            key=lambda pair: (-pair[0], pair[1]))
        want = scored[:k]
        assert [(h.score, h.chunk_id) for h in hits] == want
        assert [h.rank for h in hits] == list(range(1, len(want) + 1))
    assert time.perf_counter() - start < 10.0


def test_augmentation_requests_respect_budget(replayed_workspace):
    start = time.perf_counter()
    block_re = re.compile(r"\[SCRIPT id=[^\]]+\]\n(.*?)\n\[/SCRIPT\]", re.DOTALL)
    store = ExchangeStore(FIXTURE_WORKSPACE / "exchanges" / "exchanges.jsonl")
    augment_requests = 0
    for exchange in store.iter_exchanges():
        text = "\n".join(m["content"] for m in exchange.request["messages"])
        if "write one new, high-quality script" not in text:
            continue
        augment_requests += 1
        payloads = block_re.findall(text)
        assert len(payloads) >= 2
        assert sum(len(p) for p in payloads) <= 5000
    assert augment_requests >= 1

    rows = read_jsonl(replayed_workspace / "scripts" / "scripts.jsonl")
    augmented = [r for r in rows if r["source"] == "augmented"]
    assert augmented
    assert all(len(r["parent_ids"]) >= 2 for r in augmented)
    assert time.perf_counter() - start < 5.0


def test_pipeline_replay_is_deterministic_and_complete(tmp_path):
    work = tmp_path / "workspace"
    shutil.copytree(FIXTURE_WORKSPACE, work)
    assert len(read_jsonl(work / "documents" / "documents.jsonl")) >= 3
    assert len(read_jsonl(work / "scripts" / "scripts.jsonl")) >= 4
    assert len(read_jsonl(work / "tasks" / "tasks.jsonl")) >= 3

    start = time.perf_counter()
    argv = ["--workspace", str(work), "--backend", "replay", "pipeline", "run"]
    assert cli_main(argv) == 0
    first = digest_tree(work)
    assert cli_main(argv) == 0
    second = digest_tree(work)
    elapsed = time.perf_counter() - start
    assert first == second
    assert elapsed < 60.0

    ws = Workspace(work)
    assert [s for s in ws.get_scripts(source="augmented")]
    assert ws.get_chunks("pre") and ws.get_chunks("main")
    outcomes = {r["accepted"] for r in read_jsonl(ws.renovations_path)}
    assert {"accepted", "rejected"} <= outcomes
    assert ws.index_path("pre").is_file() and ws.index_path("final").is_file()
    for row in read_jsonl(work / "tasks" / "tasks.jsonl"):
        task_id = row["task_id"]
        assert (work / "generated" / f"{task_id}.script").is_file()
        provenance = (work / "generated" / f"{task_id}.provenance.json")
        assert "\"framework\"" in provenance.read_text(encoding="utf-8")
    report = (work / "reports" / "eval.txt").read_text(encoding="utf-8")
    assert "t-mesh: 86.21%" in report
    assert "t-drc: 93.10%" in report
    assert report.rstrip().splitlines()[-1].startswith("mean: ")


def test_ikec_toggle_isolated_on_recorded_requests(tmp_path):
    def run(ikec, root):
        ws = Workspace(root)
        ws.ensure_layout()
        store = ExchangeStore(root / "exchanges" / "log.jsonl")
        backend = RecordingBackend(MockChatBackend(), store)
        texts = {
            "k1": "mesh_build constructs the analysis grid for the design.",
            "k2": "mesh_report prints grid statistics per layer.",
        }
        index = VectorIndex([IndexEntry(cid, mock_embed(t), len(t))
                             for cid, t in sorted(texts.items())])
        snapshot = {"planner": "chateda", "method": "rag", "top_k": 2,
                    "ikec": ikec, "context_cap": 6000}
        task = GenerationTask("t1", "build the mesh and report statistics", 3)
        run_task(ws, task, index, backend, snapshot, texts_by_id=texts)
        run_task(ws, GenerationTask("t2", "export the grid report", 2), index,
                 backend, {**snapshot, "planner": "direct"}, texts_by_id=texts)
        return [e.request for e in store.iter_exchanges()]

    start = time.perf_counter()
    on = run(True, tmp_path / "on")
    off = run(False, tmp_path / "off")
    elapsed = time.perf_counter() - start
    assert len(on) == len(off) >= 3
    fragment = default_forge().fragment("ikec")
    changed = 0
    for a, b in zip(on, off):
        assert a["model_id"] == b["model_id"]
        assert a["temperature"] == b["temperature"]
        assert len(a["messages"]) == len(b["messages"])
        for msg_on, msg_off in zip(a["messages"], b["messages"]):
            assert msg_on["role"] == msg_off["role"]
            if msg_on["content"] == msg_off["content"]:
                continue
            changed += 1
            assert fragment in msg_on["content"]
            stripped = msg_on["content"].replace(fragment + "\n", "", 1)
            assert stripped == msg_off["content"]
    assert changed >= 1
    assert elapsed < 1.0
