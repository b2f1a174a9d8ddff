"""Workspace persistence for documents, chunks, scripts, and derived records.

Everything lives under one workspace directory as JSONL collections
(UTF-8, LF, sorted keys per line), which keeps runs diffable and lets the
end-to-end determinism checks compare workspaces byte for byte. Writers
rewrite whole files with in-place upserts so re-running a stage over
unchanged inputs reproduces the file exactly.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from filelock import FileLock

from .errors import (
    DocumentNotFound,
    DuplicateChunkId,
    DuplicateDocId,
    DuplicateScriptId,
    EmptyDocument,
    UnreadableInput,
)
from .gateway.embedding import EmbeddingVector

CHUNK_STATES = ("raw", "renovated_pending", "final")
SCRIPT_SOURCES = ("original", "augmented")
PAGE_MARKER = "\f"
SCRIPT_DOC_ID = "scripts"


def json_line(obj: object) -> str:
    """One canonical JSON line: sorted keys, compact, raw unicode."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def stable_id(prefix: str, *parts: str) -> str:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return f"{prefix}{h.hexdigest()[:12]}"


@dataclass(frozen=True)
class Page:
    page_no: int
    text: str

    def __post_init__(self):
        if self.page_no < 1:
            raise ValueError("page_no must be positive")


@dataclass(frozen=True)
class Document:
    """A page-structured text document."""

    doc_id: str
    title: str
    pages: tuple[Page, ...]

    def __post_init__(self):
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        numbers = [p.page_no for p in self.pages]
        if numbers != list(range(1, len(numbers) + 1)):
            raise ValueError("page numbers must be contiguous starting at 1")

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "title": self.title,
            "pages": [{"page_no": p.page_no, "text": p.text} for p in self.pages],
        }

    @classmethod
    def from_dict(cls, d: dict) -> Document:
        pages = tuple(Page(p["page_no"], p["text"]) for p in d["pages"])
        return cls(doc_id=d["doc_id"], title=d["title"], pages=pages)


@dataclass(frozen=True)
class Chunk:
    """One retrieval unit: a span of document text or a whole script.

    state tracks pipeline progress: raw after splitting, renovated_pending
    once the renovation decision is applied, final once embedded.
    """

    chunk_id: str
    doc_id: str
    page_span: tuple[int, int]
    text: str
    topic_label: str = ""
    state: str = "raw"
    embedding: EmbeddingVector | None = None

    def __post_init__(self):
        if not self.chunk_id:
            raise ValueError("chunk_id must be non-empty")
        if not self.text:
            raise ValueError("chunk text must be non-empty")
        if self.state not in CHUNK_STATES:
            raise ValueError(f"unknown chunk state {self.state!r}")
        lo, hi = self.page_span
        if lo > hi or lo < 1:
            raise ValueError(f"bad page_span {self.page_span!r}")
        if self.state == "final" and self.embedding is None:
            raise ValueError("final chunks must carry an embedding")

    def with_text(self, text: str, state: str | None = None) -> Chunk:
        return Chunk(
            chunk_id=self.chunk_id,
            doc_id=self.doc_id,
            page_span=self.page_span,
            text=text,
            topic_label=self.topic_label,
            state=state if state is not None else self.state,
            embedding=self.embedding,
        )

    def finalized(self, embedding: EmbeddingVector) -> Chunk:
        return Chunk(
            chunk_id=self.chunk_id,
            doc_id=self.doc_id,
            page_span=self.page_span,
            text=self.text,
            topic_label=self.topic_label,
            state="final",
            embedding=embedding,
        )

    def to_dict(self) -> dict:
        d = {
            "chunk_id": self.chunk_id,
            "doc_id": self.doc_id,
            "page_span": list(self.page_span),
            "text": self.text,
            "topic_label": self.topic_label,
            "state": self.state,
        }
        if self.embedding is not None:
            d["embedding"] = self.embedding.to_list()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Chunk:
        emb = d.get("embedding")
        return cls(
            chunk_id=d["chunk_id"],
            doc_id=d["doc_id"],
            page_span=(d["page_span"][0], d["page_span"][1]),
            text=d["text"],
            topic_label=d.get("topic_label", ""),
            state=d.get("state", "raw"),
            embedding=EmbeddingVector.from_list(emb) if emb is not None else None,
        )


@dataclass(frozen=True)
class Script:
    """A reference script, either hand-written or synthesized from parents."""

    script_id: str
    source: str
    text: str
    parent_ids: tuple[str, ...] = ()

    def __post_init__(self):
        if self.source not in SCRIPT_SOURCES:
            raise ValueError(f"unknown script source {self.source!r}")
        if not self.text:
            raise ValueError("script text must be non-empty")
        if self.source == "augmented" and not self.parent_ids:
            raise ValueError("augmented scripts must list parent_ids")
        if self.source == "original" and self.parent_ids:
            raise ValueError("original scripts must not list parent_ids")

    def to_dict(self) -> dict:
        return {
            "script_id": self.script_id,
            "source": self.source,
            "text": self.text,
            "parent_ids": list(self.parent_ids),
        }

    @classmethod
    def from_dict(cls, d: dict) -> Script:
        return cls(
            script_id=d["script_id"],
            source=d["source"],
            text=d["text"],
            parent_ids=tuple(d.get("parent_ids", ())),
        )

    def as_chunk(self, state: str = "raw") -> Chunk:
        return Chunk(
            chunk_id=f"script:{self.script_id}",
            doc_id=SCRIPT_DOC_ID,
            page_span=(1, 1),
            text=self.text,
            topic_label=f"script {self.script_id}",
            state=state,
        )


def read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def write_jsonl(path: Path, rows: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "".join(json_line(r) + "\n" for r in rows)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(body)


def upsert_rows(rows: list[dict], new_rows: list[dict], key: str) -> list[dict]:
    """Replace rows in place by key, appending keys not yet present.

    Positional replacement keeps file order stable, so re-running a stage
    that regenerates identical records leaves the file byte-identical.
    """
    index = {r[key]: i for i, r in enumerate(rows)}
    merged = list(rows)
    for row in new_rows:
        k = row[key]
        if k in index:
            merged[index[k]] = row
        else:
            index[k] = len(merged)
            merged.append(row)
    return merged


class Workspace:
    """Filesystem layout and collection accessors for one pipeline run."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    # layout

    @property
    def documents_path(self) -> Path:
        return self.root / "documents" / "documents.jsonl"

    def chunks_path(self, collection: str) -> Path:
        return self.root / "chunks" / f"{collection}.jsonl"

    @property
    def scripts_path(self) -> Path:
        return self.root / "scripts" / "scripts.jsonl"

    @property
    def renovations_path(self) -> Path:
        return self.root / "renovations" / "records.jsonl"

    def index_path(self, name: str) -> Path:
        return self.root / "index" / f"{name}.jsonl"

    @property
    def generated_dir(self) -> Path:
        return self.root / "generated"

    @property
    def exchanges_path(self) -> Path:
        return self.root / "exchanges" / "exchanges.jsonl"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def tasks_path(self) -> Path:
        return self.root / "tasks" / "tasks.jsonl"

    @property
    def annotations_path(self) -> Path:
        return self.root / "annotations" / "annotations.jsonl"

    def ensure_layout(self) -> None:
        for sub in ("documents", "chunks", "scripts", "renovations", "index",
                    "generated", "exchanges", "reports", "tasks", "annotations"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def lock(self, timeout: float = 30.0) -> FileLock:
        """Advisory single-writer lock for the whole workspace."""
        self.root.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.root / ".lock"), timeout=timeout)

    # documents

    def put_document(self, doc: Document) -> None:
        rows = read_jsonl(self.documents_path)
        new = doc.to_dict()
        for i, row in enumerate(rows):
            if row["doc_id"] == doc.doc_id:
                if row == new:
                    return
                raise DuplicateDocId(
                    f"document {doc.doc_id!r} already stored with different content"
                )
        rows.append(new)
        write_jsonl(self.documents_path, rows)

    def get_document(self, doc_id: str) -> Document:
        for row in read_jsonl(self.documents_path):
            if row["doc_id"] == doc_id:
                return Document.from_dict(row)
        raise DocumentNotFound(f"no document {doc_id!r} in workspace")

    def list_documents(self) -> tuple[Document, ...]:
        return tuple(Document.from_dict(r) for r in read_jsonl(self.documents_path))

    # chunks

    def put_chunks(self, collection: str, chunks: list[Chunk]) -> None:
        """Append new chunks; any id collision is an error."""
        rows = read_jsonl(self.chunks_path(collection))
        seen = {r["chunk_id"] for r in rows}
        for chunk in chunks:
            if chunk.chunk_id in seen:
                raise DuplicateChunkId(f"chunk id {chunk.chunk_id!r} already stored")
            seen.add(chunk.chunk_id)
            rows.append(chunk.to_dict())
        write_jsonl(self.chunks_path(collection), rows)

    def replace_chunks(self, collection: str, chunks: list[Chunk],
                       doc_id: str | None = None) -> None:
        """Upsert chunks; with doc_id, first drop that document's old chunks."""
        rows = read_jsonl(self.chunks_path(collection))
        if doc_id is not None:
            keep_ids = {c.chunk_id for c in chunks}
            rows = [r for r in rows
                    if r["doc_id"] != doc_id or r["chunk_id"] in keep_ids]
        rows = upsert_rows(rows, [c.to_dict() for c in chunks], "chunk_id")
        write_jsonl(self.chunks_path(collection), rows)

    def get_chunks(self, collection: str, doc_id: str | None = None,
                   state: str | None = None) -> tuple[Chunk, ...]:
        out = []
        for row in read_jsonl(self.chunks_path(collection)):
            if doc_id is not None and row["doc_id"] != doc_id:
                continue
            if state is not None and row.get("state", "raw") != state:
                continue
            out.append(Chunk.from_dict(row))
        return tuple(out)

    def clear_chunks(self, collection: str) -> None:
        write_jsonl(self.chunks_path(collection), [])

    # scripts

    def put_scripts(self, scripts: list[Script]) -> None:
        rows = read_jsonl(self.scripts_path)
        seen = {r["script_id"] for r in rows}
        for script in scripts:
            if script.script_id in seen:
                raise DuplicateScriptId(f"script id {script.script_id!r} already stored")
            seen.add(script.script_id)
            rows.append(script.to_dict())
        write_jsonl(self.scripts_path, rows)

    def replace_scripts(self, scripts: list[Script]) -> None:
        rows = upsert_rows(read_jsonl(self.scripts_path),
                       [s.to_dict() for s in scripts], "script_id")
        write_jsonl(self.scripts_path, rows)

    def get_scripts(self, source: str | None = None) -> tuple[Script, ...]:
        out = []
        for row in read_jsonl(self.scripts_path):
            if source is not None and row["source"] != source:
                continue
            out.append(Script.from_dict(row))
        return tuple(out)


def ingest_document(workspace: Workspace, path: str | Path, doc_id: str,
                    title: str | None = None,
                    page_marker: str | None = None) -> Document:
    """Read a page-delimited UTF-8 text file and persist it as a Document.

    Pages are delimited by form feeds by default; page_marker overrides that
    with a regex. Interior blank pages are kept (they keep page numbering
    honest); a trailing marker does not create a phantom last page.
    """
    p = Path(path)
    try:
        raw = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise UnreadableInput(f"cannot read {p}: {exc}") from exc
    if page_marker is None:
        parts = raw.split(PAGE_MARKER)
    else:
        try:
            parts = re.split(page_marker, raw)
        except re.error as exc:
            raise UnreadableInput(f"bad page marker regex: {exc}") from exc
    if parts and parts[-1].strip() == "":
        parts = parts[:-1]
    if not any(part.strip() for part in parts):
        raise EmptyDocument(f"{p} contains no page text")
    pages = tuple(Page(i, text) for i, text in enumerate(parts, start=1))
    doc = Document(doc_id=doc_id, title=title if title is not None else p.stem,
                   pages=pages)
    workspace.put_document(doc)
    return doc
