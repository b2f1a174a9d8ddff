"""Deterministic offline chat backend.

A rule-based stand-in for a live model: it recognizes each prompt family by
its instruction header, extracts the payload sections, and produces a
structurally valid reply that is a pure function of the prompt bytes. It
exists so integration tests, demos, and fixture recording run entirely
offline and reproducibly. Reply quality is deliberately unambitious; only
structure and determinism matter.
"""

from __future__ import annotations

import hashlib
import json
import re

from ..errors import MalformedBackendReply
from .backends import CallCounter, _finalize
from .embedding import EmbeddingVector, mock_embed
from .messages import ChatRequest

_SECTION_RE = {
    name: re.compile(rf"\[{name}\]\n(.*?)\n\[/{name}\]", re.DOTALL)
    for name in (
        "TEXT",
        "CHUNK",
        "PRE",
        "POST",
        "CONTEXT",
        "QUERY",
        "FRAMEWORK",
        "DONE",
        "COMMENT",
        "TRACE",
    )
}
_SCRIPT_BLOCK_RE = re.compile(r"\[SCRIPT id=([^\]]+)\]\n(.*?)\n\[/SCRIPT\]", re.DOTALL)
_MARKER_RE = re.compile(r'each line starting with "([^"]+)"')

_SENTENCE_END = (".", "!", "?", ":")

# Canned expansion sentences for renovation replies; selection is hash-driven
# so growth ratios vary across chunks.
_EXPANSIONS = (
    "The call validates its arguments and raises a toolkit error when a name does not resolve.",
    "Its return value can be stored and passed to the reporting helpers without conversion.",
    "In typical flows it runs after the design view is loaded and the analysis grid exists.",
    "All optional parameters fall back to the defaults of the active configuration profile.",
    "Results are keyed by layer name, which keeps downstream aggregation straightforward.",
    "Repeated calls with identical inputs are idempotent and reuse the cached intermediate data.",
)


def _digest(*parts: str) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        h.update(part.encode("utf-8"))
        h.update(b"\x00")
    return h.digest()


def _section(text: str, name: str) -> str | None:
    m = _SECTION_RE[name].search(text)
    return m.group(1) if m else None


def _words(text: str, count: int) -> list[str]:
    return text.split()[:count]


def _label_for(paragraph: str) -> str:
    head = " ".join(_words(paragraph.replace("=", " "), 5))
    return head[:48] if head else "untitled"


def _snake(text: str, parts: int = 3) -> str:
    tokens = re.findall(r"[a-zA-Z_]\w*", text.lower())
    keep = [t for t in tokens if len(t) > 2][:parts]
    return "_".join(keep) if keep else "step"


class MockChatBackend:
    """Offline deterministic backend; embeddings use the trigram embedder."""

    backend_id = "mock"

    def __init__(self):
        self.calls = CallCounter()

    def complete(self, request: ChatRequest) -> str:
        self.calls.bump("complete")
        prompt = "\n".join(m.content for m in request.messages)
        reply = self._dispatch(prompt)
        return _finalize(request, reply)

    def embed(self, text: str) -> EmbeddingVector:
        self.calls.bump("embed")
        return mock_embed(text)

    def _dispatch(self, prompt: str) -> str:
        if "You split technical documentation into topic-scoped chunks." in prompt:
            return self._split(prompt)
        if "Renovate the chunk below" in prompt:
            return self._renovate(prompt)
        if "how trustworthy an expanded revision" in prompt:
            return self._score(prompt)
        if "write one new, high-quality script" in prompt:
            return self._augment(prompt)
        if "Output only the framework of comments" in prompt:
            return self._plan(prompt)
        if "Fill in the code for one comment" in prompt:
            return self._fill_comment(prompt)
        if "Write the complete script for the requirement below" in prompt:
            return self._direct(prompt)
        if "interleaving reasoning and actions" in prompt:
            return self._react(prompt)
        raise MalformedBackendReply("mock backend does not recognize this prompt")

    # prompt families

    def _split(self, prompt: str) -> str:
        text = _section(prompt, "TEXT")
        if text is None:
            raise MalformedBackendReply("split prompt without [TEXT] section")
        paragraphs = [p for p in re.split(r"\n\s*\n", text.strip()) if p.strip()]
        if not paragraphs:
            return "=== CHUNK: empty page ===\n"
        tail_incomplete = not paragraphs[-1].rstrip().endswith(_SENTENCE_END)
        body = paragraphs[:-1] if tail_incomplete else paragraphs
        out: list[str] = []
        for para in body:
            out.append(f"=== CHUNK: {_label_for(para)} ===")
            out.append(para)
        if tail_incomplete:
            out.append("=== INCOMPLETE ===")
            out.append(paragraphs[-1])
        return "\n".join(out) + "\n"

    def _renovate(self, prompt: str) -> str:
        chunk = _section(prompt, "CHUNK") or ""
        h = _digest("renovate", chunk)
        if h[1] % 7 == 0:
            return chunk  # occasionally the model finds nothing to add
        count = 1 + h[0] % 4
        picks = [_EXPANSIONS[(h[2] + i) % len(_EXPANSIONS)] for i in range(count)]
        return chunk + "\n\n" + " ".join(picks)

    def _score(self, prompt: str) -> str:
        pre = _section(prompt, "PRE") or ""
        post = _section(prompt, "POST") or ""
        h = _digest("score", pre, post)
        conf = (int.from_bytes(h[4:8], "big") % 101) / 10.0
        added = post[len(pre):] if post.startswith(pre) else post
        tokens = [t for t in re.findall(r"[A-Za-z_]\w+", added) if len(t) > 4]
        n_entities = h[1] % 4 if pre != post else 0
        entities = [
            {"text": tokens[i % len(tokens)] if tokens else f"detail-{i}",
             "category": 1 + (h[2] + i) % 3}
            for i in range(n_entities)
        ]
        verdict = json.dumps({"entities": entities, "confidence": conf})
        return (
            "Step 2: the summary omits the entities listed below.\n"
            "Step 3: scored against the reference material.\n"
            f"```json\n{verdict}\n```\n"
        )

    def _augment(self, prompt: str) -> str:
        blocks = _SCRIPT_BLOCK_RE.findall(prompt)
        if not blocks:
            raise MalformedBackendReply("augmentation prompt without script blocks")
        ids = [sid for sid, _ in blocks]
        imports: list[str] = []
        bodies: list[str] = []
        for sid, text in reversed(blocks):
            body_lines = []
            for line in text.splitlines():
                if line.startswith(("import ", "from ")):
                    if line not in imports:
                        imports.append(line)
                else:
                    body_lines.append(line)
            bodies.append(f"# adapted from {sid}\n" + "\n".join(body_lines).strip())
        header = "# combined workflow derived from " + ", ".join(ids)
        return "\n".join(
            [header, *sorted(imports), "", "\n\n".join(bodies), "", "print('workflow complete')"]
        )

    def _plan(self, prompt: str) -> str:
        query = _section(prompt, "QUERY") or ""
        m = _MARKER_RE.search(prompt)
        marker = m.group(1) if m else "#"
        clauses = [
            c.strip(" .")
            for c in re.split(r",|;| and | then ", query)
            if c.strip(" .")
        ]
        clauses = clauses[:3] or ["carry out the requirement"]
        lines = [
            f"{marker} Step {i}: {clause}" for i, clause in enumerate(clauses, start=1)
        ]
        lines.append(f"{marker} Step {len(lines) + 1}: collect and return the results")
        return "\n".join(lines) + "\n"

    def _fill_comment(self, prompt: str) -> str:
        comment = _section(prompt, "COMMENT") or ""
        query = _section(prompt, "QUERY") or ""
        h = _digest("fill", comment, query)
        name = _snake(comment.lstrip("#").strip())
        var = f"{name}_result"
        lines = [f"{var} = toolkit.{name}()"]
        if h[0] % 2:
            lines.append(f"report['{name}'] = {var}")
        if h[1] % 3 == 0:
            lines.append(f"log.info('finished {name}', extra={{'rows': len({var})}})")
        return "\n".join(lines) + "\n"

    def _direct(self, prompt: str) -> str:
        query = _section(prompt, "QUERY") or ""
        plan = self._plan_lines(query)
        out: list[str] = []
        for i, clause in enumerate(plan, start=1):
            name = _snake(clause)
            out.append(f"# {clause}")
            out.append(f"step{i}_{name} = toolkit.{name}()")
        out.append("print('done')")
        return "\n".join(out) + "\n"

    def _plan_lines(self, query: str) -> list[str]:
        clauses = [
            c.strip(" .")
            for c in re.split(r",|;| and | then ", query)
            if c.strip(" .")
        ]
        return clauses[:3] or ["carry out the requirement"]

    def _react(self, prompt: str) -> str:
        trace = _section(prompt, "TRACE") or ""
        query = _section(prompt, "QUERY") or ""
        if "OBSERVATION" not in trace:
            lookup = " ".join(_words(query, 6))
            return (
                "THOUGHT: I should look up the toolkit references first.\n"
                f"ACTION: search {lookup}\n"
            )
        if "framework of comments" in prompt:
            clauses = self._plan_lines(query)
            lines = [f"# Step {i}: {c}" for i, c in enumerate(clauses, start=1)]
            lines.append(f"# Step {len(lines) + 1}: collect and return the results")
            return "FINAL:\n" + "\n".join(lines) + "\n"
        return "FINAL:\n" + self._direct(prompt)
