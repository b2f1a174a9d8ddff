"""Embedding vectors and the deterministic offline embedder.

The offline embedder hashes character trigrams into a fixed 256-dim signed
count vector and L2-normalizes it. It is a pure function of the input text,
so replayed pipeline runs need no recorded embedding traffic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..errors import EmptyText

MOCK_DIMS = _kernels.N_BINS


@dataclass(frozen=True)
class EmbeddingVector:
    """A dense embedding. `values` is float64 and treated as immutable."""

    values: np.ndarray

    @property
    def dims(self) -> int:
        return int(self.values.shape[0])

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def normalized(self) -> "EmbeddingVector":
        n = self.norm
        if n == 0.0:
            raise ValueError("cannot normalize a zero vector")
        return EmbeddingVector(self.values / n)

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]

    @classmethod
    def from_list(cls, values: list[float]) -> "EmbeddingVector":
        return cls(np.asarray(values, dtype=np.float64))


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    na, nb = a.norm, b.norm
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values) / (na * nb))


def mock_embed(text: str) -> EmbeddingVector:
    """Deterministic unit-norm embedding of `text` (trigram hashing).

    Raises EmptyText for the empty string. Identical text always yields a
    bit-identical vector, on both the numba and the numpy kernel path.
    """
    if not text:
        raise EmptyText("cannot embed empty text")
    counts = _kernels.trigram_counts(text)
    if not counts.any():
        # Signs cancelled everywhere; park the text at a fixed axis.
        counts[0] = 1.0
    # Counts are exact small integers, so norm and quotient are identical
    # regardless of which kernel filled them.
    norm = np.sqrt(np.dot(counts, counts))
    return EmbeddingVector(counts / norm)
