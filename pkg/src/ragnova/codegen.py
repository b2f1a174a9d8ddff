"""Two-stage code generation: comment framework first, then code per comment.

The planner turns a task query plus retrieved context into an ordered
framework of comment lines. The generator then fills in code one comment
at a time, each time retrieving context for the query plus that comment
and seeing the full framework and all code produced so far. Single-shot
direct generation and an experimental reason/act loop cover the baseline
configurations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .corpus import Workspace
from .errors import UnparseablePlan
from .gateway.messages import ChatMessage, ChatRequest
from .prompt_forge import PromptForge, default_forge, render_capped
from .retrieval import RetrievalHit, VectorIndex, context_blocks, query

log = logging.getLogger(__name__)

DIFFICULTY_BANDS = {"easy": (0, 4), "medium": (5, 7), "hard": (8, 10)}
DEFAULT_CONTEXT_CAP = 6000
REACT_MAX_STEPS = 4

_RETRY_PLAN = (
    "Your reply contained no comment lines. Answer again with only the "
    "framework of comments, one step per line, each line starting with the "
    "comment marker."
)
_GOAL_SCRIPT = "the complete script that fulfils the requirement"
_GOAL_PLAN = (
    'the framework of comments for the script, one comment line per step, '
    'each line starting with "#"'
)


@dataclass(frozen=True)
class GenerationTask:
    """One code-generation request, optionally graded for difficulty."""

    task_id: str
    query: str
    difficulty: int | None = None
    reference_script_id: str | None = None

    def __post_init__(self):
        if not self.query.strip():
            raise ValueError("task query must be non-empty")
        if self.difficulty is not None and not 0 <= self.difficulty <= 10:
            raise ValueError("difficulty must be in 0..10")

    @property
    def band(self) -> str | None:
        if self.difficulty is None:
            return None
        for name, (lo, hi) in DIFFICULTY_BANDS.items():
            if lo <= self.difficulty <= hi:
                return name
        return None

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "query": self.query,
            "difficulty": self.difficulty,
            "reference_script_id": self.reference_script_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> GenerationTask:
        return cls(
            task_id=d["task_id"],
            query=d["query"],
            difficulty=d.get("difficulty"),
            reference_script_id=d.get("reference_script_id"),
        )


@dataclass(frozen=True)
class CommentFramework:
    task_id: str
    comments: tuple[str, ...]
    raw_planner_reply: str


@dataclass(frozen=True)
class Segment:
    comment: str
    code_lines: tuple[str, ...]


@dataclass(frozen=True)
class GeneratedScript:
    task_id: str
    segments: tuple[Segment, ...]
    full_text: str
    provenance: dict


def _assemble(segments: list[Segment]) -> str:
    lines: list[str] = []
    for seg in segments:
        if seg.comment:
            lines.append(seg.comment)
        lines.extend(seg.code_lines)
    return "\n".join(lines) + "\n" if lines else ""


def _strip_fence(reply: str) -> str:
    text = reply.strip()
    if text.startswith("```") and text.endswith("```"):
        inner = text.split("\n", 1)[1] if "\n" in text else ""
        return inner.rsplit("```", 1)[0].strip("\n")
    return text


def _code_lines(reply: str) -> tuple[str, ...]:
    text = _strip_fence(reply)
    return tuple(line.rstrip() for line in text.splitlines() if line.strip())


def plan(task: GenerationTask, index: VectorIndex, top_k: int, backend,
         ikec_enabled: bool = True, forge: PromptForge | None = None,
         texts_by_id: dict[str, str] | None = None,
         comment_marker: str = "#",
         context_cap: int = DEFAULT_CONTEXT_CAP
         ) -> tuple[CommentFramework, list[RetrievalHit]]:
    """Produce the ordered comment framework for a task."""
    forge = forge or default_forge()
    hits = query(index, task.query, top_k, backend)
    blocks = context_blocks(hits, texts_by_id or {})
    messages, _ = render_capped(forge, "task_planner", {
        "query": task.query,
        "comment_marker": comment_marker,
    }, blocks, ikec_enabled=ikec_enabled, char_cap=context_cap)
    messages = list(messages)
    for attempt in range(2):
        reply = backend.complete(ChatRequest(messages=tuple(messages)))
        comments = tuple(
            line.strip() for line in reply.splitlines()
            if line.strip().startswith(comment_marker)
        )
        if comments:
            return CommentFramework(task.task_id, comments, reply), hits
        messages += [ChatMessage("assistant", reply or "(empty)"),
                     ChatMessage("user", _RETRY_PLAN)]
    raise UnparseablePlan(f"no comment lines for task {task.task_id}")


def generate(framework: CommentFramework, task: GenerationTask,
             index: VectorIndex, top_k: int, backend,
             ikec_enabled: bool = True, forge: PromptForge | None = None,
             texts_by_id: dict[str, str] | None = None,
             context_cap: int = DEFAULT_CONTEXT_CAP) -> GeneratedScript:
    """Fill in code for each framework comment, in order."""
    if not framework.comments:
        raise ValueError("framework has no comments")
    forge = forge or default_forge()
    framework_text = "\n".join(framework.comments)
    segments: list[Segment] = []
    seg_meta: list[dict] = []
    for comment in framework.comments:
        hits = query(index, f"{task.query} {comment}", top_k, backend)
        blocks = context_blocks(hits, texts_by_id or {})
        done = _assemble(segments)
        messages, _ = render_capped(forge, "script_generator", {
            "query": task.query,
            "framework": framework_text,
            "done": done if done.strip() else "(nothing yet)",
            "comment": comment,
        }, blocks, ikec_enabled=ikec_enabled, char_cap=context_cap)
        reply = backend.complete(ChatRequest(messages=messages))
        code = _code_lines(reply)
        if not code:
            log.warning("empty code block for comment %r", comment)
        segments.append(Segment(comment=comment, code_lines=code))
        seg_meta.append({
            "comment": comment,
            "hits": [h.chunk_id for h in hits],
            "empty": not code,
        })
    return GeneratedScript(
        task_id=framework.task_id,
        segments=tuple(segments),
        full_text=_assemble(segments),
        provenance={"segments": seg_meta},
    )


def generate_direct(task: GenerationTask, index: VectorIndex, top_k: int,
                    backend, ikec_enabled: bool = True,
                    forge: PromptForge | None = None,
                    texts_by_id: dict[str, str] | None = None,
                    context_cap: int = DEFAULT_CONTEXT_CAP) -> GeneratedScript:
    """Single-shot generation: query plus context straight to a script."""
    forge = forge or default_forge()
    hits = query(index, task.query, top_k, backend)
    blocks = context_blocks(hits, texts_by_id or {})
    messages, _ = render_capped(forge, "direct_generation", {
        "query": task.query,
    }, blocks, ikec_enabled=ikec_enabled, char_cap=context_cap)
    reply = backend.complete(ChatRequest(messages=messages))
    code = _code_lines(reply)
    segment = Segment(comment="", code_lines=code)
    return GeneratedScript(
        task_id=task.task_id,
        segments=(segment,),
        full_text=_assemble([segment]),
        provenance={"segments": [{"comment": "", "hits": [h.chunk_id for h in hits],
                                  "empty": not code}]},
    )


def react_loop(goal: str, payload: str, index: VectorIndex, top_k: int,
               backend, ikec_enabled: bool, forge: PromptForge,
               texts_by_id: dict[str, str], context_cap: int,
               max_steps: int = REACT_MAX_STEPS) -> tuple[str, dict]:
    """Reason/act loop against the retrieval tool; returns (answer, meta).

    The model either requests "ACTION: search <q>" lookups, whose results
    are appended to the trace as observations, or ends with "FINAL:"
    followed by the goal text. Experimental: malformed or over-long loops
    fall back to the last reply, flagged in the metadata.
    """
    trace = "(empty)"
    steps: list[dict] = []
    reply = ""
    for _ in range(max_steps):
        messages = forge.render("react_generation", {
            "goal": goal,
            "max_steps": str(max_steps),
            "query": payload,
            "trace": trace,
        }, ikec_enabled=ikec_enabled)
        reply = backend.complete(ChatRequest(messages=messages))
        final_pos = reply.find("FINAL:")
        if final_pos >= 0:
            answer = reply[final_pos + len("FINAL:"):].strip("\n")
            return answer, {"steps": steps, "flag": None}
        action = next((line.strip()[len("ACTION: search "):]
                       for line in reply.splitlines()
                       if line.strip().startswith("ACTION: search ")), None)
        if action is None:
            return reply, {"steps": steps, "flag": "react_malformed"}
        hits = query(index, action, top_k, backend)
        blocks = context_blocks(hits, texts_by_id)
        observation = "\n".join(blocks)[:context_cap] or "(no results)"
        steps.append({"search": action, "hits": [h.chunk_id for h in hits]})
        if trace == "(empty)":
            trace = ""
        trace += f"{reply.strip()}\nOBSERVATION:\n{observation}\n"
    return reply, {"steps": steps, "flag": "react_truncated"}


def run_task(workspace: Workspace, task: GenerationTask, index: VectorIndex,
             backend, config: dict, forge: PromptForge | None = None,
             texts_by_id: dict[str, str] | None = None) -> GeneratedScript:
    """Run one task under a config snapshot and persist script + provenance.

    config keys used here: planner (direct|chateda), method (rag|react),
    top_k, ikec, context_cap; the full dict is stored verbatim in the
    provenance file so a run can be reproduced from its outputs.
    """
    forge = forge or default_forge()
    texts = texts_by_id if texts_by_id is not None else {}
    top_k = int(config.get("top_k", 2))
    ikec = bool(config.get("ikec", True))
    cap = int(config.get("context_cap", DEFAULT_CONTEXT_CAP))
    planner = config.get("planner", "chateda")
    method = config.get("method", "rag")

    provenance: dict = {"task_id": task.task_id, "config": dict(config)}
    if method == "react":
        if planner == "chateda":
            plan_text, plan_meta = react_loop(
                _GOAL_PLAN, task.query, index, top_k, backend, ikec, forge,
                texts, cap)
            comments = tuple(line.strip() for line in plan_text.splitlines()
                             if line.strip().startswith("#"))
            if not comments:
                raise UnparseablePlan(f"no comment lines for task {task.task_id}")
            payload = (f"{task.query}\n\nFramework to follow:\n"
                       + "\n".join(comments))
            answer, gen_meta = react_loop(
                _GOAL_SCRIPT, payload, index, top_k, backend, ikec, forge,
                texts, cap)
            segment = Segment(comment="", code_lines=_code_lines(answer))
            script = GeneratedScript(task.task_id, (segment,),
                                     _assemble([segment]),
                                     {"plan": plan_meta, "generate": gen_meta})
        else:
            answer, gen_meta = react_loop(
                _GOAL_SCRIPT, task.query, index, top_k, backend, ikec, forge,
                texts, cap)
            segment = Segment(comment="", code_lines=_code_lines(answer))
            script = GeneratedScript(task.task_id, (segment,),
                                     _assemble([segment]), {"generate": gen_meta})
    elif planner == "chateda":
        framework, plan_hits = plan(task, index, top_k, backend, ikec, forge,
                                    texts, context_cap=cap)
        script = generate(framework, task, index, top_k, backend, ikec, forge,
                          texts, context_cap=cap)
        provenance["planner_hits"] = [h.chunk_id for h in plan_hits]
        provenance["framework"] = list(framework.comments)
    else:
        script = generate_direct(task, index, top_k, backend, ikec, forge,
                                 texts, context_cap=cap)

    provenance.update(script.provenance)
    workspace.generated_dir.mkdir(parents=True, exist_ok=True)
    script_path = workspace.generated_dir / f"{task.task_id}.script"
    prov_path = workspace.generated_dir / f"{task.task_id}.provenance.json"
    with script_path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(script.full_text)
    with prov_path.open("w", encoding="utf-8", newline="\n") as fh:
        json.dump(provenance, fh, sort_keys=True, ensure_ascii=False, indent=2)
        fh.write("\n")
    return GeneratedScript(script.task_id, script.segments, script.full_text,
                           provenance)
