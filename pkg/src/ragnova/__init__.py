"""ragnova: retrieval-augmented preprocessing and code generation toolkit.

The package turns raw tool documentation into an embedding index whose
chunks have been semantically split, confidence-gated rewritten, and
augmented with synthesized example scripts, then drives a two-stage
comment-planner / per-comment code generator against that index and
scores the results line by line.
"""

from __future__ import annotations

__version__ = "0.1.0"
