from __future__ import annotations

import json
import os
import subprocess
import sys

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from ragnova import _kernels

_DUMP_COUNTS = """\
import json, sys
from ragnova import _kernels
texts = json.loads(sys.stdin.read())
rows = [_kernels.trigram_counts(t).tolist() for t in texts]
print(json.dumps({"using_numba": _kernels.USING_NUMBA, "rows": rows}))
"""


def _counts_in_subprocess(texts, numba_flag):
    env = dict(os.environ, RAGNOVA_NUMBA=numba_flag)
    proc = subprocess.run(
        [sys.executable, "-c", _DUMP_COUNTS],
        input=json.dumps(texts),
        capture_output=True,
        text=True,
        env=env,
        check=True,
    )
    return json.loads(proc.stdout)


def test_counts_shape_and_integrality():
    counts = _kernels.trigram_counts("place and route the design")
    assert counts.shape == (_kernels.N_BINS,)
    assert counts.dtype == np.float64
    assert np.array_equal(counts, np.round(counts))


def test_short_text_still_produces_a_trigram():
    # Two sentinel pads guarantee >= 1 trigram even for a single character.
    assert _kernels.trigram_counts("a").any()
    assert _kernels.text_codes("a").shape == (3,)


def test_text_codes_are_unicode_scalars():
    codes = _kernels.text_codes("abé")
    assert codes[:3].tolist() == [ord("a"), ord("b"), ord("é")]
    assert codes[3:].tolist() == [0, 0]


def test_numpy_fallback_matches_active_path():
    for text in ("a", "timing", "fix hold violations on clk_net", "ééé"):
        active = _kernels.trigram_counts(text)
        fallback = np.zeros(_kernels.N_BINS, dtype=np.float64)
        _kernels._accumulate_numpy(_kernels.text_codes(text), fallback)
        assert np.array_equal(active, fallback)


def test_env_flag_selects_path_and_paths_agree():
    texts = ["mesh quality", "a", "drc écart", "x" * 400]
    with_numba = _counts_in_subprocess(texts, "1")
    without = _counts_in_subprocess(texts, "0")
    assert without["using_numba"] is False
    assert with_numba["rows"] == without["rows"]
    if not with_numba["using_numba"]:
        # numba missing in this interpreter; the flag still must not break.
        assert with_numba["rows"] == without["rows"]


@settings(max_examples=80, deadline=None)
@given(st.text(min_size=1, max_size=120))
def test_counts_are_pure_and_total_matches_trigrams(text):
    first = _kernels.trigram_counts(text)
    assert np.array_equal(first, _kernels.trigram_counts(text))
    # Each of the len(text) trigrams contributes exactly +-1 to one bin.
    assert np.abs(first).sum() <= len(text)
    assert int(np.abs(first).sum()) % 2 == len(text) % 2
