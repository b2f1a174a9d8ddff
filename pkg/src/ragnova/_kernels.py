"""Hot loop behind the deterministic embedder.

The only compute-bound inner loop in this package is the character-trigram
feature accumulation used by the offline embedder (it runs once per chunk,
script, and query, and hundreds of thousands of times in the test suite).
It ships in two interchangeable forms:

* a numba ``@njit`` kernel, used when numba imports cleanly, and
* a vectorized pure-numpy fallback.

Set ``RAGNOVA_NUMBA=0`` to force the numpy path. The two paths are
bit-identical by construction: the hash is exact uint64 arithmetic and the
accumulation adds only +-1.0 into 256 bins, so every partial sum is a small
integer that float64 represents exactly regardless of summation order.
``bench/bench_embedding.py`` compares the two.
"""

from __future__ import annotations

import os

import numpy as np

N_BINS = 256

# FNV-1a style combine followed by a murmur-style finalizer. All constants
# are np.uint64 so both paths stay in wrapping 64-bit arithmetic.
_MULT = np.uint64(0x100000001B3)
_FIN1 = np.uint64(0xFF51AFD7ED558CCD)
_FIN2 = np.uint64(0xC4CEB9FE1A85EC53)
_S33 = np.uint64(33)
_MASK_BIN = np.uint64(N_BINS - 1)
_S8 = np.uint64(8)
_ONE = np.uint64(1)

_PAD = np.zeros(2, dtype=np.uint64)


def _accumulate_numpy(codes: np.ndarray, out: np.ndarray) -> None:
    """Vectorized trigram accumulation. `codes` is uint64, len >= 3."""
    h = (codes[:-2] * _MULT + codes[1:-1]) * _MULT + codes[2:]
    h ^= h >> _S33
    h *= _FIN1
    h ^= h >> _S33
    h *= _FIN2
    h ^= h >> _S33
    bins = (h & _MASK_BIN).astype(np.int64)
    signs = np.where((h >> _S8) & _ONE, 1.0, -1.0)
    # bincount sums +-1.0 weights; every partial sum is an exact integer.
    out += np.bincount(bins, weights=signs, minlength=N_BINS)


def _make_jit_kernel():
    from numba import njit

    @njit(cache=True)
    def _accumulate_jit(codes, out):  # pragma: no cover - numba-compiled
        n = codes.shape[0]
        for i in range(n - 2):
            h = (codes[i] * _MULT + codes[i + 1]) * _MULT + codes[i + 2]
            h ^= h >> _S33
            h *= _FIN1
            h ^= h >> _S33
            h *= _FIN2
            h ^= h >> _S33
            b = h & _MASK_BIN
            if (h >> _S8) & _ONE:
                out[b] += 1.0
            else:
                out[b] -= 1.0

    return _accumulate_jit


def _numba_wanted() -> bool:
    flag = os.environ.get("RAGNOVA_NUMBA", "").strip().lower()
    return flag not in {"0", "false", "off", "no"}


_accumulate_jit = None
if _numba_wanted():
    try:
        _accumulate_jit = _make_jit_kernel()
    except ImportError:
        _accumulate_jit = None

USING_NUMBA = _accumulate_jit is not None
_accumulate = _accumulate_jit if USING_NUMBA else _accumulate_numpy


def text_codes(text: str) -> np.ndarray:
    """Unicode scalar values of `text` as uint64, padded with two sentinels
    so every non-empty text yields at least one trigram."""
    codes = np.frombuffer(text.encode("utf-32-le"), dtype="<u4").astype(np.uint64)
    return np.concatenate([codes, _PAD])


def trigram_counts(text: str) -> np.ndarray:
    """Signed trigram-hash counts of `text` in 256 bins (float64 integers)."""
    out = np.zeros(N_BINS, dtype=np.float64)
    _accumulate(text_codes(text), out)
    return out
