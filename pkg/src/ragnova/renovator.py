"""Chunk renovation with credibility scoring and statistical acceptance.

Each raw chunk is rewritten by the model into a more detailed version.
A second pass scores how trustworthy the rewrite is: the rewritten text
is treated as source material and the original as its summary, missing
entities are listed and categorized by inferability, and a confidence
in [0, 10] is assigned. Acceptance is then decided corpus-wide: a
rewrite is adopted iff its confidence z-score minus its growth z-score
clears a user threshold, so unusually large growth needs unusually high
confidence to survive.
"""

from __future__ import annotations

import json
import logging
import re
import statistics
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal

from .corpus import Chunk, Workspace, read_jsonl, upsert_rows, write_jsonl
from .errors import ConfUnavailable, InsufficientRecords, UnparseableScoreReply
from .gateway.messages import ChatMessage, ChatRequest
from .prompt_forge import PromptForge, default_forge

log = logging.getLogger(__name__)

CATEGORIES = (1, 2, 3)
SCORE_RETRIES = 1

_FENCE_RE = re.compile(r"```[a-z]*\s*\n(.*?)```", re.DOTALL)
_RETRY_SCORE = (
    "Your reply did not contain a valid verdict block. Answer again and end "
    "with a fenced json block of the form\n"
    '```json\n{"entities": [{"text": "...", "category": 1}], "confidence": 0.0}\n```'
)


def round_conf(value: float) -> float:
    """Quantize a confidence to one decimal place, half-up."""
    return float(Decimal(str(value)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def growth_ratio(pre_text: str, post_text: str) -> float:
    """Relative character-count growth from pre to post (code points)."""
    if not pre_text:
        raise ValueError("pre_text must be non-empty")
    return (len(post_text) - len(pre_text)) / len(pre_text)


@dataclass(frozen=True)
class MissingEntity:
    text: str
    category: int

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"entity category must be 1, 2, or 3, got {self.category!r}")


@dataclass(frozen=True)
class RenovationRecord:
    """Full audit record for one chunk's renovation attempt.

    conf is None when scoring failed; such records are excluded from the
    corpus statistics and rejected without z-scores.
    """

    chunk_id: str
    pre_text: str
    post_text: str
    entities: tuple[MissingEntity, ...]
    conf: float | None
    grow: float
    cdiff: float | None = None
    gdiff: float | None = None
    accepted: str = "pending"
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.accepted not in ("pending", "accepted", "rejected"):
            raise ValueError(f"bad accepted state {self.accepted!r}")
        if self.conf is not None and not 0.0 <= self.conf <= 10.0:
            raise ValueError(f"conf out of range: {self.conf!r}")
        if self.accepted != "pending" and self.conf is not None:
            if self.cdiff is None or self.gdiff is None:
                raise ValueError("decided records must carry cdiff and gdiff")

    def final_text(self) -> str:
        return self.post_text if self.accepted == "accepted" else self.pre_text

    def to_dict(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "pre_text": self.pre_text,
            "post_text": self.post_text,
            "entities": [{"text": e.text, "category": e.category} for e in self.entities],
            "conf": self.conf,
            "grow": self.grow,
            "cdiff": self.cdiff,
            "gdiff": self.gdiff,
            "accepted": self.accepted,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> RenovationRecord:
        return cls(
            chunk_id=d["chunk_id"],
            pre_text=d["pre_text"],
            post_text=d["post_text"],
            entities=tuple(MissingEntity(e["text"], e["category"]) for e in d["entities"]),
            conf=d["conf"],
            grow=d["grow"],
            cdiff=d.get("cdiff"),
            gdiff=d.get("gdiff"),
            accepted=d.get("accepted", "pending"),
            flags=tuple(d.get("flags", ())),
        )


@dataclass(frozen=True)
class CorpusStats:
    mean_conf: float
    std_conf: float
    mean_grow: float
    std_grow: float
    constant: float

    def __post_init__(self):
        if self.std_conf < 0 or self.std_grow < 0:
            raise ValueError("standard deviations must be >= 0")


def renovate_chunk(chunk: Chunk, backend, ikec_enabled: bool = True,
                   context: str = "", forge: PromptForge | None = None) -> str:
    """Ask the model for a renovated version of one chunk's text."""
    post, _ = _renovate_raw(chunk, backend, ikec_enabled, context, forge)
    return post


def _renovate_raw(chunk: Chunk, backend, ikec_enabled: bool, context: str,
                  forge: PromptForge | None) -> tuple[str, tuple[str, ...]]:
    if chunk.state != "raw":
        raise ValueError(f"chunk {chunk.chunk_id} is not in state raw")
    forge = forge or default_forge()
    messages = forge.render("renovation", {
        "context": context if context.strip() else "(none)",
        "chunk": chunk.text,
    }, ikec_enabled=ikec_enabled)
    reply = backend.complete(ChatRequest(messages=messages)).strip()
    if not reply:
        return chunk.text, ("empty_renovation",)
    return reply, ()


def _parse_verdict(reply: str) -> tuple[tuple[MissingEntity, ...], float, tuple[str, ...]]:
    for match in _FENCE_RE.finditer(reply):
        try:
            payload = json.loads(match.group(1))
        except json.JSONDecodeError:
            continue
        if not isinstance(payload, dict) or "confidence" not in payload:
            continue
        raw_conf = payload["confidence"]
        if not isinstance(raw_conf, (int, float)) or isinstance(raw_conf, bool):
            raise UnparseableScoreReply(f"confidence is not a number: {raw_conf!r}")
        entities = []
        for item in payload.get("entities", []):
            if not isinstance(item, dict) or "text" not in item or "category" not in item:
                raise UnparseableScoreReply(f"malformed entity {item!r}")
            if item["category"] not in CATEGORIES:
                raise UnparseableScoreReply(f"entity category out of range: {item!r}")
            entities.append(MissingEntity(str(item["text"]), item["category"]))
        flags: tuple[str, ...] = ()
        conf = float(raw_conf)
        if conf < 0.0 or conf > 10.0:
            conf = min(max(conf, 0.0), 10.0)
            flags = ("conf_clamped",)
        return tuple(entities), round_conf(conf), flags
    raise UnparseableScoreReply("no parseable verdict block in reply")


def score_codrc(pre_text: str, post_text: str, context: str, backend,
                forge: PromptForge | None = None,
                retries: int = SCORE_RETRIES) -> tuple[tuple[MissingEntity, ...], float]:
    """Score a renovation's credibility; returns (missing entities, conf).

    The prompt presents the renovated text as the source and the original
    as its summary. An unparseable reply is retried once with a corrective
    follow-up; a second failure raises ConfUnavailable.
    """
    entities, conf, _ = _score_raw(pre_text, post_text, context, backend, forge, retries)
    return entities, conf


def _score_raw(pre_text: str, post_text: str, context: str, backend,
               forge: PromptForge | None, retries: int
               ) -> tuple[tuple[MissingEntity, ...], float, tuple[str, ...]]:
    if not pre_text or not post_text:
        raise ValueError("both texts must be non-empty")
    forge = forge or default_forge()
    messages = list(forge.render("codrc", {
        "post_text": post_text,
        "pre_text": pre_text,
        "context": context if context.strip() else "(none)",
    }))
    last: Exception | None = None
    for _ in range(retries + 1):
        reply = backend.complete(ChatRequest(messages=tuple(messages)))
        try:
            return _parse_verdict(reply)
        except UnparseableScoreReply as exc:
            last = exc
            messages += [ChatMessage("assistant", reply or "(empty)"),
                         ChatMessage("user", _RETRY_SCORE)]
    raise ConfUnavailable(str(last))


def compute_stats(records: list[RenovationRecord], constant: float = 0.0) -> CorpusStats:
    """Population mean and standard deviation of conf and grow."""
    scored = [r for r in records if r.conf is not None]
    if len(scored) < 2:
        raise InsufficientRecords(f"need >= 2 scored records, have {len(scored)}")
    confs = [r.conf for r in scored]
    grows = [r.grow for r in scored]
    return CorpusStats(
        mean_conf=statistics.mean(confs),
        std_conf=statistics.pstdev(confs),
        mean_grow=statistics.mean(grows),
        std_grow=statistics.pstdev(grows),
        constant=constant,
    )


def decide(record: RenovationRecord, stats: CorpusStats) -> RenovationRecord:
    """Fill z-scores and accept iff cdiff - gdiff >= constant.

    A zero standard deviation on either axis makes every record equally
    typical there, so that z-score is defined as 0.
    """
    if record.conf is None:
        raise ValueError("cannot decide an unscored record")
    cdiff = 0.0 if stats.std_conf == 0 else (record.conf - stats.mean_conf) / stats.std_conf
    gdiff = 0.0 if stats.std_grow == 0 else (record.grow - stats.mean_grow) / stats.std_grow
    verdict = "accepted" if cdiff - gdiff >= stats.constant else "rejected"
    return replace(record, cdiff=cdiff, gdiff=gdiff, accepted=verdict)


def renovate_corpus(workspace: Workspace, chunks: list[Chunk], backend,
                    constant: float = 0.0, ikec_enabled: bool = True,
                    forge: PromptForge | None = None,
                    context_provider=None, gate: bool = True,
                    collection: str = "main"
                    ) -> tuple[tuple[Chunk, ...], tuple[RenovationRecord, ...]]:
    """Renovate, score, and decide a whole batch of chunks.

    Two phases with a hard barrier between them: first every chunk is
    renovated and scored, then statistics over the full batch drive every
    decision. With gate=False all scored renovations are adopted (the
    no-gate ablation) but scoring still runs so records stay auditable.
    Per-chunk failures degrade to rejection; the batch never aborts.
    """
    forge = forge or default_forge()
    records: list[RenovationRecord] = []
    for chunk in chunks:
        context = context_provider(chunk) if context_provider else ""
        post, flags = _renovate_raw(chunk, backend, ikec_enabled, context, forge)
        try:
            entities, conf, score_flags = _score_raw(
                chunk.text, post, context, backend, forge, SCORE_RETRIES)
        except ConfUnavailable:
            log.warning("no confidence for chunk %s; rejecting", chunk.chunk_id)
            records.append(RenovationRecord(
                chunk_id=chunk.chunk_id, pre_text=chunk.text, post_text=post,
                entities=(), conf=None, grow=growth_ratio(chunk.text, post),
                accepted="rejected", flags=flags + ("conf_unavailable",)))
            continue
        records.append(RenovationRecord(
            chunk_id=chunk.chunk_id, pre_text=chunk.text, post_text=post,
            entities=entities, conf=conf, grow=growth_ratio(chunk.text, post),
            flags=flags + score_flags))

    try:
        stats = compute_stats(records, constant)
    except InsufficientRecords:
        stats = None

    decided: list[RenovationRecord] = []
    for record in records:
        if record.conf is None:
            decided.append(record)
        elif stats is None:
            verdict = "accepted" if not gate else "rejected"
            decided.append(replace(record, cdiff=0.0, gdiff=0.0, accepted=verdict,
                                   flags=record.flags + ("insufficient_records",)))
        else:
            record = decide(record, stats)
            if not gate and record.accepted == "rejected":
                record = replace(record, accepted="accepted",
                                 flags=record.flags + ("gate_bypassed",))
            decided.append(record)

    by_id = {c.chunk_id: c for c in chunks}
    updated = tuple(
        by_id[r.chunk_id].with_text(r.final_text(), state="renovated_pending")
        for r in decided
    )
    workspace.replace_chunks(collection, list(updated))
    rows = upsert_rows(read_jsonl(workspace.renovations_path),
                       [r.to_dict() for r in decided], "chunk_id")
    write_jsonl(workspace.renovations_path, rows)
    return updated, tuple(decided)
