"""Document splitting: model-driven semantic chunks and a fixed-size baseline.

Semantic splitting feeds the model one page at a time plus the incomplete
trailing paragraph carried over from the previous page. The reply must use
the chunk markup contract; replies that break the markup or lose content
are retried with a corrective follow-up, then fall back to the fixed-size
splitter so a bad page never aborts a document.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .corpus import Chunk, Document, Workspace
from .errors import ContentLossDetected, UnparseableSplitReply
from .gateway.messages import ChatMessage, ChatRequest
from .prompt_forge import PromptForge, default_forge

log = logging.getLogger(__name__)

CHUNK_HEADER_PREFIX = "=== CHUNK:"
CHUNK_HEADER_SUFFIX = "==="
INCOMPLETE_HEADER = "=== INCOMPLETE ==="
MAX_RETRIES = 2
FALLBACK_CHUNK_SIZE = 500

_RETRY_FORMAT = (
    "Your reply did not follow the required format. Answer again using only "
    "'=== CHUNK: <topic label> ===' header lines, each followed by that "
    "chunk's text, with an optional final '=== INCOMPLETE ===' section for a "
    "trailing incomplete paragraph. Do not add any other text."
)
_RETRY_CONTENT = (
    "Your reply dropped, altered, or invented text. Answer again reproducing "
    "every part of the input verbatim under the chunk headers; only "
    "whitespace may change."
)


@dataclass(frozen=True)
class SplitResult:
    """Outcome of splitting one segment (page + incoming carryover)."""

    chunks: tuple[tuple[str, str], ...]
    carryover: str
    source_page: int
    fallback_applied: bool = False
    whole_page_incomplete: bool = False


def normalize_ws(text: str) -> str:
    """Collapse whitespace runs to single spaces and trim the ends."""
    return " ".join(text.split())


def split_fixed(text: str, chunk_size: int, overlap_ratio: float = 0.0,
                unit: str = "chars") -> list[str]:
    """Fixed-size baseline splitter over characters or whitespace words.

    Consecutive chunks share floor(chunk_size * overlap_ratio) units; the
    final chunk may be shorter. An empty text yields no chunks.
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    if not 0.0 <= overlap_ratio < 1.0:
        raise ValueError("overlap_ratio must be in [0, 1)")
    if unit not in ("chars", "words"):
        raise ValueError(f"unknown unit {unit!r}")

    if unit == "words":
        items: list[str] | str = text.split()
    else:
        items = text
    n = len(items)
    if n == 0:
        return []
    overlap = math.floor(chunk_size * overlap_ratio)
    stride = chunk_size - overlap
    starts = [0]
    while starts[-1] + chunk_size < n:
        starts.append(starts[-1] + stride)
    pieces = [items[s:s + chunk_size] for s in starts]
    if unit == "words":
        return [" ".join(p) for p in pieces]
    return list(pieces)


def parse_split_reply(reply: str) -> tuple[list[tuple[str, str]], str]:
    """Parse the chunk markup contract into (label, text) pairs + carryover.

    Raises UnparseableSplitReply when the reply has no sections, has text
    outside a section, places the incomplete section anywhere but last, or
    leaves a section empty.
    """
    chunks: list[tuple[str, str]] = []
    carryover_lines: list[str] | None = None
    current: list[str] | None = None
    label = ""
    seen_incomplete = False

    def flush():
        nonlocal current
        if current is None:
            return
        body = "\n".join(current).strip("\n")
        if not body.strip():
            raise UnparseableSplitReply(f"empty chunk body under {label!r}")
        chunks.append((label, body))
        current = None

    for line in reply.splitlines():
        stripped = line.strip()
        if stripped == INCOMPLETE_HEADER:
            if seen_incomplete:
                raise UnparseableSplitReply("multiple incomplete sections")
            flush()
            seen_incomplete = True
            carryover_lines = []
        elif stripped.startswith(CHUNK_HEADER_PREFIX) and stripped.endswith(CHUNK_HEADER_SUFFIX):
            if seen_incomplete:
                raise UnparseableSplitReply("chunk after the incomplete section")
            flush()
            label = stripped[len(CHUNK_HEADER_PREFIX):-len(CHUNK_HEADER_SUFFIX)].strip()
            current = []
        elif carryover_lines is not None:
            carryover_lines.append(line)
        elif current is not None:
            current.append(line)
        elif stripped:
            raise UnparseableSplitReply(f"text outside any section: {stripped[:60]!r}")
    flush()

    carryover = "\n".join(carryover_lines).strip("\n") if carryover_lines else ""
    if seen_incomplete and not carryover.strip():
        raise UnparseableSplitReply("incomplete section with no text")
    if not chunks and not carryover:
        raise UnparseableSplitReply("reply contains no sections")
    return chunks, carryover


def preserves_content(chunks: list[tuple[str, str]], carryover: str,
                      carryover_in: str, segment_text: str) -> bool:
    """True when the split output reproduces the input up to whitespace."""
    produced = " ".join([text for _, text in chunks] + [carryover])
    expected = carryover_in + " " + segment_text
    return normalize_ws(produced) == normalize_ws(expected)


def split_segment(segment_text: str, carryover_in: str, backend,
                  forge: PromptForge | None = None, source_page: int = 1,
                  retries: int = MAX_RETRIES,
                  fallback_chunk_size: int = FALLBACK_CHUNK_SIZE) -> SplitResult:
    """Split one segment through the model, retrying then falling back.

    Retries append the failed reply plus a corrective instruction to the
    conversation, so each attempt is a distinct request. After the retry
    budget, the normalized input is split by the fixed baseline (overlap 0,
    which also preserves content) and the result is flagged.
    """
    if not normalize_ws(carryover_in + " " + segment_text):
        raise ValueError("segment and carryover are both empty")
    forge = forge or default_forge()
    messages = list(forge.render("splitter", {
        "carryover": carryover_in,
        "segment": segment_text,
    }))

    last_error: Exception | None = None
    for _ in range(retries + 1):
        reply = backend.complete(ChatRequest(messages=tuple(messages)))
        try:
            chunks, carryover = parse_split_reply(reply)
            if not preserves_content(chunks, carryover, carryover_in, segment_text):
                raise ContentLossDetected(
                    f"split of page {source_page} does not reproduce its input"
                )
        except UnparseableSplitReply as exc:
            last_error = exc
            messages += [ChatMessage("assistant", reply or "(empty)"),
                         ChatMessage("user", _RETRY_FORMAT)]
            continue
        except ContentLossDetected as exc:
            last_error = exc
            messages += [ChatMessage("assistant", reply or "(empty)"),
                         ChatMessage("user", _RETRY_CONTENT)]
            continue
        whole_page = not chunks and bool(carryover)
        if whole_page:
            log.warning("page %d is entirely an incomplete paragraph", source_page)
        return SplitResult(chunks=tuple(chunks), carryover=carryover,
                           source_page=source_page,
                           whole_page_incomplete=whole_page)

    log.warning("falling back to fixed split on page %d: %s", source_page, last_error)
    flat = normalize_ws(carryover_in + " " + segment_text)
    pieces = split_fixed(flat, fallback_chunk_size, 0.0)
    return SplitResult(chunks=tuple(("", p) for p in pieces), carryover="",
                       source_page=source_page, fallback_applied=True)


def _page_offsets(doc: Document, joiner: str = "\n") -> tuple[str, list[tuple[int, int, int]]]:
    """Concatenated document text plus (page_no, start, end) char ranges."""
    spans = []
    parts = []
    pos = 0
    for page in doc.pages:
        if parts:
            pos += len(joiner)
        spans.append((page.page_no, pos, pos + len(page.text)))
        parts.append(page.text)
        pos += len(page.text)
    return joiner.join(parts), spans


def _span_for_range(spans: list[tuple[int, int, int]], start: int, end: int) -> tuple[int, int]:
    touched = [no for no, s, e in spans if s < end and e > start]
    if touched:
        return (min(touched), max(touched))
    before = [no for no, s, e in spans if e <= start]
    return (before[-1], before[-1]) if before else (1, 1)


def split_document(workspace: Workspace, doc: Document, strategy: str,
                   backend=None, forge: PromptForge | None = None,
                   chunk_size: int = FALLBACK_CHUNK_SIZE,
                   overlap_ratio: float = 0.0, unit: str = "chars",
                   collection: str = "main") -> tuple[Chunk, ...]:
    """Split a whole document and persist the chunks in page order.

    Semantic strategy threads the incomplete-paragraph carryover from page
    to page and records a cross-page span for chunks that absorb it; a
    final unresolved carryover becomes a terminal chunk. Fixed strategy
    never touches the backend.
    """
    if strategy == "fixed":
        chunks = _split_document_fixed(doc, chunk_size, overlap_ratio, unit)
    elif strategy == "semantic":
        if backend is None:
            raise ValueError("semantic strategy requires a backend")
        chunks = _split_document_semantic(doc, backend, forge)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    workspace.replace_chunks(collection, list(chunks), doc_id=doc.doc_id)
    return chunks


def _split_document_fixed(doc: Document, chunk_size: int, overlap_ratio: float,
                          unit: str) -> tuple[Chunk, ...]:
    text, spans = _page_offsets(doc)
    pieces = split_fixed(text, chunk_size, overlap_ratio, unit)
    chunks = []
    pos = 0
    overlap = math.floor(chunk_size * overlap_ratio)
    for i, piece in enumerate(pieces, start=1):
        if unit == "chars":
            start = pos
            end = pos + len(piece)
            pos = end - overlap if len(piece) == chunk_size else end
            span = _span_for_range(spans, start, end)
        else:
            start = text.find(piece.split()[0], pos) if piece else pos
            span = _span_for_range(spans, max(start, 0), max(start, 0) + len(piece))
            pos = max(start, 0) + 1
        chunks.append(Chunk(
            chunk_id=f"{doc.doc_id}:c{i:04d}",
            doc_id=doc.doc_id,
            page_span=span,
            text=piece,
            topic_label="",
        ))
    return tuple(chunks)


def _split_document_semantic(doc: Document, backend,
                             forge: PromptForge | None) -> tuple[Chunk, ...]:
    chunks: list[Chunk] = []
    carry = ""
    carry_origin = 1
    counter = 0
    last_page = doc.pages[-1].page_no if doc.pages else 1

    for page in doc.pages:
        if not normalize_ws(carry + " " + page.text):
            continue
        result = split_segment(page.text, carry, backend, forge,
                               source_page=page.page_no)
        carry_norm_len = len(normalize_ws(carry))
        offset = 0
        for label, text in result.chunks:
            counter += 1
            covers_carry = carry_norm_len > 0 and offset < carry_norm_len
            span = (carry_origin, page.page_no) if covers_carry else (page.page_no, page.page_no)
            chunks.append(Chunk(
                chunk_id=f"{doc.doc_id}:c{counter:04d}",
                doc_id=doc.doc_id,
                page_span=span,
                text=text,
                topic_label=label,
            ))
            offset += len(normalize_ws(text)) + 1
        if result.carryover:
            covers_carry = carry_norm_len > 0 and offset < carry_norm_len
            carry_origin = carry_origin if covers_carry else page.page_no
        else:
            carry_origin = page.page_no
        carry = result.carryover

    if normalize_ws(carry):
        counter += 1
        chunks.append(Chunk(
            chunk_id=f"{doc.doc_id}:c{counter:04d}",
            doc_id=doc.doc_id,
            page_span=(carry_origin, last_page),
            text=carry,
            topic_label="trailing carryover",
        ))
    return tuple(chunks)
