"""Exception taxonomy shared across the package.

Every error raised on a contract boundary derives from RagnovaError so the
CLI can map error families to exit codes without string matching.
"""

from __future__ import annotations


class RagnovaError(Exception):
    """Base class for all package errors."""


class UsageError(RagnovaError):
    """Bad invocation: unknown subcommand, invalid flag combination."""


class StageError(RagnovaError):
    """A pipeline stage failed in a way that aborts the invocation."""


# gateway

class TransportFailure(RagnovaError):
    """Network or HTTP failure that survived the retry policy."""


class MalformedBackendReply(RagnovaError):
    """The backend answered, but the wire payload does not conform."""


class NoRecordedResponse(RagnovaError):
    """Replay miss: the request fingerprint is not in the exchange store."""

    def __init__(self, fingerprint: str, preview: str = ""):
        self.fingerprint = fingerprint
        msg = f"no recorded response for fingerprint {fingerprint}"
        if preview:
            msg += f" (request starts: {preview!r})"
        super().__init__(msg)


class EmptyText(RagnovaError):
    """Embedding requested for an empty string."""


# prompt rendering

class UnknownTemplate(RagnovaError):
    """Template id does not name a shipped prompt template."""


class MissingPlaceholder(RagnovaError):
    """A required placeholder was not supplied to render()."""


# corpus store

class UnreadableInput(RagnovaError):
    """Input file missing, unreadable, or not valid UTF-8."""


class EmptyDocument(RagnovaError):
    """Ingested file contains no pages."""


class DocumentNotFound(RagnovaError, KeyError):
    """Requested document id is not in the workspace."""


class DuplicateChunkId(RagnovaError):
    """Chunk id collides with one already stored."""


class DuplicateDocId(RagnovaError):
    """Document id already stored with different content."""


class DuplicateScriptId(RagnovaError):
    """Script id collides with one already stored."""


# splitter

class UnparseableSplitReply(RagnovaError):
    """Split reply violates the chunk markup contract."""


class ContentLossDetected(RagnovaError):
    """Normalized concatenation of split output does not match the input."""


# renovator

class UnparseableScoreReply(RagnovaError):
    """Credibility-score reply has no parseable verdict block."""


class ConfUnavailable(RagnovaError):
    """Confidence could not be obtained; renovation is rejected conservatively."""


class InsufficientRecords(RagnovaError):
    """Corpus statistics need at least two scored records."""


# augmentor

class BudgetInfeasible(RagnovaError):
    """No pair of scripts fits inside the character budget."""


class DegenerateOutput(RagnovaError):
    """Augmented script is byte-identical to one of its parents."""


class TargetUnreached(RagnovaError):
    """Attempt limit hit before reaching the augmentation target."""

    def __init__(self, produced: int, target: int):
        self.produced = produced
        self.target = target
        super().__init__(f"produced {produced} of {target} augmented scripts")


# retrieval

class EmptyQuery(RagnovaError):
    """Query text is empty."""


# codegen

class UnparseablePlan(RagnovaError):
    """Planner reply contains no comment lines."""


# evaluator

class ZeroTotal(RagnovaError):
    """Line annotation with a non-positive total line count."""


class EmptySet(RagnovaError):
    """Aggregation over zero annotations."""
