"""Prompt templates and fragments, loaded from text files and rendered
into chat messages.

Template files live in ``prompts/<template_id>.txt`` (packaged by default,
overridable with an on-disk directory of the same layout). Placeholders use
``{{name}}`` with no nesting. A line consisting of ``[[fragment_id]]`` pulls
in a reusable fragment from ``prompts/fragments/<fragment_id>.txt``; the
``ikec`` fragment is special-cased behind the ``ikec_enabled`` flag, and
toggling it changes nothing else in the rendered bytes.

A template that opens with a ``[SYSTEM]`` line renders as a system message
followed by a user message (split at the ``[USER]`` line); otherwise the
whole body is one user message.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .errors import MissingPlaceholder, UnknownTemplate
from .gateway.messages import ChatMessage

PLACEHOLDER_RE = re.compile(r"\{\{([a-z_]+)\}\}")
FRAGMENT_LINE_RE = re.compile(r"^\[\[([a-z_]+)\]\]$")

IKEC_FRAGMENT_ID = "ikec"
KEY_SENTENCE_FRAGMENT_ID = "key_sentence"

# The motivational sentence is load-bearing test surface; keep it verbatim.
KEY_SENTENCE = "Take a deep breath, this is very important to my career"


@dataclass(frozen=True)
class PromptTemplate:
    template_id: str
    body: str
    required_placeholders: frozenset[str]
    fragments: tuple[str, ...]


@dataclass(frozen=True)
class PromptFragment:
    fragment_id: str
    text: str


class PromptForge:
    """Loads templates once and renders them as pure functions of their
    inputs. Safe for concurrent use after construction."""

    def __init__(self, root: str | Path | None = None):
        self._root = Path(root) if root is not None else None
        self._templates: dict[str, PromptTemplate] = {}
        self._fragments: dict[str, PromptFragment] = {}
        self._load_all()

    def _read(self, relative: str) -> str | None:
        if self._root is not None:
            path = self._root / relative
            return path.read_text(encoding="utf-8") if path.is_file() else None
        ref = resources.files("ragnova.prompts").joinpath(relative)
        return ref.read_text(encoding="utf-8") if ref.is_file() else None

    def _iter_names(self, subdir: str) -> list[str]:
        if self._root is not None:
            base = self._root / subdir if subdir else self._root
            if not base.is_dir():
                return []
            return sorted(p.stem for p in base.glob("*.txt"))
        base = resources.files("ragnova.prompts")
        if subdir:
            base = base.joinpath(subdir)
        if not base.is_dir():
            return []
        return sorted(
            entry.name[: -len(".txt")]
            for entry in base.iterdir()
            if entry.name.endswith(".txt")
        )

    def _load_all(self) -> None:
        for fid in self._iter_names("fragments"):
            text = self._read(f"fragments/{fid}.txt")
            assert text is not None
            self._fragments[fid] = PromptFragment(fid, text.rstrip("\n"))
        for tid in self._iter_names(""):
            body = self._read(f"{tid}.txt")
            assert body is not None
            frags = tuple(
                m.group(1)
                for line in body.splitlines()
                if (m := FRAGMENT_LINE_RE.match(line))
            )
            for fid in frags:
                if fid not in self._fragments:
                    raise UnknownTemplate(
                        f"template {tid!r} references unknown fragment {fid!r}"
                    )
            placeholders = frozenset(PLACEHOLDER_RE.findall(body))
            self._templates[tid] = PromptTemplate(tid, body, placeholders, frags)

    def template_ids(self) -> list[str]:
        return sorted(self._templates)

    def template(self, template_id: str) -> PromptTemplate:
        try:
            return self._templates[template_id]
        except KeyError:
            raise UnknownTemplate(f"no template named {template_id!r}") from None

    def fragment(self, fragment_id: str) -> str:
        return self._fragments[fragment_id].text

    def render(
        self,
        template_id: str,
        substitutions: dict[str, str],
        ikec_enabled: bool = False,
    ) -> tuple[ChatMessage, ...]:
        tpl = self.template(template_id)
        missing = tpl.required_placeholders - set(substitutions)
        if missing:
            raise MissingPlaceholder(
                f"template {template_id!r} is missing {sorted(missing)}"
            )
        extra = set(substitutions) - tpl.required_placeholders
        if extra:
            raise ValueError(
                f"template {template_id!r} got unexpected substitutions {sorted(extra)}"
            )

        lines: list[str] = []
        for line in tpl.body.split("\n"):
            m = FRAGMENT_LINE_RE.match(line)
            if not m:
                lines.append(line)
                continue
            fid = m.group(1)
            if fid == IKEC_FRAGMENT_ID and not ikec_enabled:
                continue  # drop the line entirely; no other byte may change
            lines.append(self.fragment(fid))
        body = "\n".join(lines)
        # Single pass so substituted values are never re-scanned.
        body = PLACEHOLDER_RE.sub(lambda m: substitutions[m.group(1)], body)
        return _split_messages(body)


def _split_messages(body: str) -> tuple[ChatMessage, ...]:
    if body.startswith("[SYSTEM]\n"):
        rest = body[len("[SYSTEM]\n"):]
        system_text, sep, user_text = rest.partition("\n[USER]\n")
        if not sep:
            raise ValueError("[SYSTEM] template is missing its [USER] section")
        return (
            ChatMessage("system", system_text),
            ChatMessage("user", user_text),
        )
    return (ChatMessage("user", body),)


def render_capped(
    forge: PromptForge,
    template_id: str,
    substitutions: dict[str, str],
    context_blocks: list[str],
    *,
    ikec_enabled: bool = False,
    char_cap: int | None = None,
    context_key: str = "context",
) -> tuple[tuple[ChatMessage, ...], int]:
    """Render with retrieved context, dropping blocks from the lowest rank
    upward until the whole prompt fits the character cap.

    Returns (messages, number of context blocks kept).
    """
    blocks = list(context_blocks)
    while True:
        ctx = "\n\n".join(blocks) if blocks else "(none)"
        messages = forge.render(
            template_id, {**substitutions, context_key: ctx}, ikec_enabled
        )
        total = sum(len(m.content) for m in messages)
        if char_cap is None or total <= char_cap or not blocks:
            return messages, len(blocks)
        blocks.pop()


_default_forge: PromptForge | None = None


def default_forge() -> PromptForge:
    global _default_forge
    if _default_forge is None:
        _default_forge = PromptForge()
    return _default_forge
