"""Exact embedding index with top-k cosine retrieval.

The index is a flat matrix of unit vectors scanned in full for every
query: corpora here are hundreds of chunks, so exactness is cheap and
keeps ablation comparisons free of approximation noise. Ties are broken
by ascending chunk id so rankings are reproducible.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Chunk, Workspace, json_line, read_jsonl
from .errors import EmptyQuery
from .gateway.embedding import MOCK_DIMS, EmbeddingVector

log = logging.getLogger(__name__)

NORM_TOL = 1e-9


@dataclass(frozen=True)
class IndexEntry:
    chunk_id: str
    embedding: EmbeddingVector
    text_chars: int

    def __post_init__(self):
        if abs(self.embedding.norm - 1.0) > NORM_TOL:
            raise ValueError(f"index entry {self.chunk_id!r} is not unit-norm")
        if self.text_chars < 1:
            raise ValueError("text_chars must be positive")


@dataclass(frozen=True)
class RetrievalHit:
    chunk_id: str
    score: float
    rank: int


class VectorIndex:
    """Immutable list of entries plus a stacked score matrix."""

    def __init__(self, entries: list[IndexEntry] | tuple[IndexEntry, ...] = ()):
        self.entries = tuple(entries)
        if self.entries:
            self._matrix = np.stack([e.embedding.values for e in self.entries])
        else:
            self._matrix = np.zeros((0, MOCK_DIMS))
        self._ids = np.array([e.chunk_id for e in self.entries])

    def __len__(self) -> int:
        return len(self.entries)

    def query_vector(self, vector: EmbeddingVector, top_k: int) -> list[RetrievalHit]:
        if top_k < 1:
            raise ValueError("top_k must be >= 1")
        if not self.entries:
            return []
        # Row-wise multiply-and-sum instead of a BLAS matvec: the blocked
        # matvec can round identical rows differently, which would leak
        # float noise into the ascending-id tie-break.
        scores = (self._matrix * vector.normalized().values).sum(axis=1)
        order = np.lexsort((self._ids, -scores))[:top_k]
        return [
            RetrievalHit(chunk_id=str(self._ids[i]), score=float(scores[i]), rank=r)
            for r, i in enumerate(order, start=1)
        ]

    def save(self, path: Path) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            for e in self.entries:
                fh.write(json_line({
                    "chunk_id": e.chunk_id,
                    "embedding": e.embedding.to_list(),
                    "text_chars": e.text_chars,
                }) + "\n")

    @classmethod
    def load(cls, path: Path) -> VectorIndex:
        entries = [
            IndexEntry(
                chunk_id=row["chunk_id"],
                embedding=EmbeddingVector.from_list(row["embedding"]),
                text_chars=row["text_chars"],
            )
            for row in read_jsonl(path)
        ]
        return cls(entries)


def build_index(workspace: Workspace, collection: str, name: str, backend) -> VectorIndex:
    """Embed every chunk of a collection and persist the named index.

    Chunks are transitioned to state final (embedding attached) in the
    store; a chunk whose embedding fails is logged and excluded.
    """
    chunks = workspace.get_chunks(collection)
    entries = []
    finalized = []
    for chunk in chunks:
        try:
            emb = backend.embed(chunk.text).normalized()
        except Exception as exc:
            log.warning("skipping chunk %s: embedding failed (%s)", chunk.chunk_id, exc)
            continue
        entries.append(IndexEntry(chunk_id=chunk.chunk_id, embedding=emb,
                                  text_chars=len(chunk.text)))
        finalized.append(chunk.finalized(emb))
    if finalized:
        workspace.replace_chunks(collection, finalized)
    index = VectorIndex(entries)
    index.save(workspace.index_path(name))
    return index


def query(index: VectorIndex, text: str, top_k: int, backend) -> list[RetrievalHit]:
    """Top-k chunks by cosine similarity against the embedded query text."""
    if not text.strip():
        raise EmptyQuery("query text is empty")
    return index.query_vector(backend.embed(text), top_k)


def context_blocks(hits: list[RetrievalHit], texts_by_id: dict[str, str]) -> list[str]:
    """Rank-ordered prompt blocks, each prefixed with its chunk id."""
    return [f"[{h.chunk_id}]\n{texts_by_id[h.chunk_id]}" for h in hits
            if h.chunk_id in texts_by_id]


def chunk_texts(workspace: Workspace, collections: tuple[str, ...] = ("main", "pre")) -> dict[str, str]:
    """chunk_id -> text lookup across the given collections."""
    out: dict[str, str] = {}
    for collection in collections:
        for chunk in workspace.get_chunks(collection):
            out[chunk.chunk_id] = chunk.text
    return out
