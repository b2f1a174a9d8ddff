#!/usr/bin/env python3
"""Benchmark the trigram embedding kernel: numba JIT vs pure numpy.

Both paths are timed on the same synthetic corpus and checked for
bit-identical output first. The package picks the JIT path automatically
when numba is importable; set RAGNOVA_NUMBA=0 to force the numpy fallback
at run time. Usage:

    python3 bench/bench_embedding.py --texts 2000 --chars 400 --repeat 5
"""

from __future__ import annotations

import argparse
import random
import statistics
import time

import numpy as np

from ragnova import _kernels

WORDS = (
    "mesh", "route", "power", "timing", "clock", "layer", "export", "scan",
    "grid", "report", "thermal", "drc", "via", "net", "block", "audit",
    "marge", "seuil", "couche", "signal", "analyse", "profil",
)


def make_corpus(n_texts: int, n_chars: int, seed: int) -> list[str]:
    rng = random.Random(seed)
    corpus = []
    for _ in range(n_texts):
        words = []
        size = 0
        while size < n_chars:
            word = rng.choice(WORDS)
            words.append(word)
            size += len(word) + 1
        corpus.append(" ".join(words)[:n_chars])
    return corpus


def run_pass(accumulate, codes: list[np.ndarray]) -> float:
    start = time.perf_counter()
    for arr in codes:
        out = np.zeros(_kernels.N_BINS, dtype=np.float64)
        accumulate(arr, out)
    return time.perf_counter() - start


def bench(accumulate, codes: list[np.ndarray], repeat: int) -> list[float]:
    accumulate(codes[0], np.zeros(_kernels.N_BINS, dtype=np.float64))  # warm up
    return [run_pass(accumulate, codes) for _ in range(repeat)]


def report(label: str, times: list[float], n_texts: int, total_chars: int) -> None:
    best = min(times)
    mean = statistics.mean(times)
    print(f"{label:<14} best {best * 1000:8.2f} ms   mean {mean * 1000:8.2f} ms   "
          f"{n_texts / best:10.0f} texts/s   {total_chars / best / 1e6:7.1f} Mchars/s")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--texts", type=int, default=2000)
    parser.add_argument("--chars", type=int, default=400)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    corpus = make_corpus(args.texts, args.chars, args.seed)
    codes = [_kernels.text_codes(t) for t in corpus]
    total_chars = sum(len(t) for t in corpus)
    print(f"corpus: {args.texts} texts x {args.chars} chars "
          f"({total_chars} chars total), {args.repeat} passes each")
    print(f"package-selected path: {'numba' if _kernels.USING_NUMBA else 'numpy'}")

    try:
        jit = _kernels._make_jit_kernel()
    except ImportError:
        jit = None
        print("numba unavailable; benchmarking the numpy path only")

    if jit is not None:
        sample = codes[: min(50, len(codes))]
        for arr in sample:
            a = np.zeros(_kernels.N_BINS, dtype=np.float64)
            b = np.zeros(_kernels.N_BINS, dtype=np.float64)
            jit(arr, a)
            _kernels._accumulate_numpy(arr, b)
            if not np.array_equal(a, b):
                print("FAIL: kernel outputs differ")
                return 1
        print(f"outputs bit-identical on {len(sample)} sample texts")

    numpy_times = bench(_kernels._accumulate_numpy, codes, args.repeat)
    report("numpy", numpy_times, args.texts, total_chars)
    if jit is not None:
        jit_times = bench(jit, codes, args.repeat)
        report("numba", jit_times, args.texts, total_chars)
        print(f"speedup (best over best): {min(numpy_times) / min(jit_times):.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
