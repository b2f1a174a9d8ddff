from __future__ import annotations

import pytest

from ragnova.corpus import (
    Chunk,
    Document,
    Page,
    Script,
    Workspace,
    ingest_document,
    json_line,
    stable_id,
    upsert_rows,
    write_jsonl,
)
from ragnova.errors import (
    DuplicateChunkId,
    DuplicateDocId,
    DuplicateScriptId,
    EmptyDocument,
    UnreadableInput,
)
from ragnova.gateway import mock_embed


def _doc(doc_id="d1", n_pages=2):
    pages = tuple(Page(i, f"page {i} text.") for i in range(1, n_pages + 1))
    return Document(doc_id=doc_id, title="t", pages=pages)


def _chunk(chunk_id="c1", text="some text", doc_id="d1", state="raw"):
    return Chunk(chunk_id=chunk_id, doc_id=doc_id, page_span=(1, 1),
                 text=text, state=state)


def test_json_line_is_sorted_and_compact():
    assert json_line({"b": 1, "a": "é"}) == '{"a":"é","b":1}'


def test_stable_id_distinguishes_part_boundaries():
    assert stable_id("x-", "ab", "c") != stable_id("x-", "a", "bc")
    assert stable_id("x-", "ab", "c") == stable_id("x-", "ab", "c")
    assert stable_id("p", "a").startswith("p")


def test_document_pages_must_be_contiguous_from_one():
    with pytest.raises(ValueError):
        Document(doc_id="d", title="t", pages=(Page(2, "x"),))
    with pytest.raises(ValueError):
        Document(doc_id="d", title="t", pages=(Page(1, "x"), Page(3, "y")))
    with pytest.raises(ValueError):
        Page(0, "x")


def test_chunk_validation():
    with pytest.raises(ValueError):
        _chunk(text="")
    with pytest.raises(ValueError):
        Chunk(chunk_id="c", doc_id="d", page_span=(2, 1), text="x")
    with pytest.raises(ValueError):
        _chunk(state="bogus")
    with pytest.raises(ValueError):
        _chunk(state="final")  # no embedding
    emb = mock_embed("x")
    final = _chunk().finalized(emb)
    assert final.state == "final"
    assert final.embedding is not None


def test_chunk_round_trips_through_dict():
    chunk = _chunk().finalized(mock_embed("hello"))
    again = Chunk.from_dict(chunk.to_dict())
    assert again.chunk_id == chunk.chunk_id
    assert again.state == "final"
    assert again.embedding.to_list() == chunk.embedding.to_list()


def test_script_source_rules():
    with pytest.raises(ValueError):
        Script(script_id="s", source="augmented", text="x")
    with pytest.raises(ValueError):
        Script(script_id="s", source="original", text="x", parent_ids=("a",))
    aug = Script(script_id="s", source="augmented", text="x", parent_ids=("a", "b"))
    chunk = aug.as_chunk()
    assert chunk.chunk_id == "script:s"
    assert chunk.doc_id == "scripts"


def test_upsert_rows_keeps_positions_and_appends():
    rows = [{"k": "a", "v": 1}, {"k": "b", "v": 2}]
    merged = upsert_rows(rows, [{"k": "b", "v": 20}, {"k": "c", "v": 3}], "k")
    assert merged == [{"k": "a", "v": 1}, {"k": "b", "v": 20}, {"k": "c", "v": 3}]
    assert rows[1] == {"k": "b", "v": 2}  # input untouched


def test_workspace_document_round_trip(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    doc = _doc()
    ws.put_document(doc)
    assert ws.get_document("d1").pages == doc.pages
    ws.put_document(doc)  # identical re-put is fine
    with pytest.raises(DuplicateDocId):
        ws.put_document(Document(doc_id="d1", title="other", pages=doc.pages))
    with pytest.raises(KeyError):
        ws.get_document("missing")


def test_workspace_chunk_collections(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    ws.put_chunks("main", [_chunk("c1"), _chunk("c2")])
    with pytest.raises(DuplicateChunkId):
        ws.put_chunks("main", [_chunk("c1")])
    assert len(ws.get_chunks("main")) == 2

    ws.replace_chunks("main", [_chunk("c1", text="updated")], doc_id="d1")
    kept = ws.get_chunks("main")
    assert [c.chunk_id for c in kept] == ["c1"]
    assert kept[0].text == "updated"


def test_replace_chunks_scoped_to_doc(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    ws.put_chunks("main", [_chunk("a:c1", doc_id="a"), _chunk("b:c1", doc_id="b")])
    ws.replace_chunks("main", [_chunk("a:c2", doc_id="a")], doc_id="a")
    ids = [c.chunk_id for c in ws.get_chunks("main")]
    assert "b:c1" in ids and "a:c2" in ids and "a:c1" not in ids


def test_workspace_scripts(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    s1 = Script(script_id="s1", source="original", text="a")
    ws.put_scripts([s1])
    with pytest.raises(DuplicateScriptId):
        ws.put_scripts([s1])
    ws.replace_scripts([Script(script_id="s1", source="original", text="b")])
    assert ws.get_scripts()[0].text == "b"
    assert ws.get_scripts(source="augmented") == ()


def test_ingest_document_page_marker(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    src = tmp_path / "doc.txt"
    src.write_text("page one.\fpage two.\fpage three.\f", encoding="utf-8")
    doc = ingest_document(ws, src, "d1")
    assert [p.page_no for p in doc.pages] == [1, 2, 3]
    assert doc.pages[2].text == "page three."


def test_ingest_document_custom_marker(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    src = tmp_path / "doc.txt"
    src.write_text("alpha\n---PAGE---\nbeta", encoding="utf-8")
    doc = ingest_document(ws, src, "d2", page_marker=r"\n---PAGE---\n")
    assert len(doc.pages) == 2
    assert doc.pages[1].text == "beta"


def test_ingest_document_errors(tmp_path):
    ws = Workspace(tmp_path / "ws")
    ws.ensure_layout()
    empty = tmp_path / "empty.txt"
    empty.write_text("  \f  ", encoding="utf-8")
    with pytest.raises(EmptyDocument):
        ingest_document(ws, empty, "d3")
    with pytest.raises(UnreadableInput):
        ingest_document(ws, tmp_path / "missing.txt", "d4")
    bad = tmp_path / "bad.txt"
    bad.write_text("some text", encoding="utf-8")
    with pytest.raises(UnreadableInput):
        ingest_document(ws, bad, "d5", page_marker="[")  # invalid regex


def test_write_jsonl_is_lf_and_stable(tmp_path):
    path = tmp_path / "rows.jsonl"
    write_jsonl(path, [{"b": 2, "a": 1}])
    raw = path.read_bytes()
    assert raw == b'{"a":1,"b":2}\n'
