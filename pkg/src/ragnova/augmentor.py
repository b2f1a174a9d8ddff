"""Script-corpus augmentation: sample sources under a budget, synthesize.

New reference scripts are produced by showing the model two to three
randomly sampled originals (total size capped by a character budget) plus
retrieval context, and asking for one structurally different script that
recombines them. Degenerate outputs (empty or equal to a parent) are
retried once and then skipped; overall effort is bounded by an attempt
limit of twice the target count.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass

from .corpus import Script, Workspace, stable_id
from .errors import BudgetInfeasible, DegenerateOutput, TargetUnreached
from .gateway.messages import ChatMessage, ChatRequest
from .prompt_forge import PromptForge, default_forge

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 5000
MIN_SAMPLE = 2
MAX_SAMPLE = 3
RESAMPLE_LIMIT = 16

_RETRY_DEGENERATE = (
    "Your script is not acceptable: it is empty or identical to one of the "
    "source scripts. Write a genuinely new script with a significantly "
    "different structure that still recombines the source scripts' logic."
)


@dataclass(frozen=True)
class AugmentationBatch:
    """One sampled batch sent to the model."""

    sampled_script_ids: tuple[str, ...]
    total_chars: int
    budget: int = DEFAULT_BUDGET
    rag_context: tuple[str, ...] = ()
    output_script_id: str = ""

    def __post_init__(self):
        if not MIN_SAMPLE <= len(self.sampled_script_ids) <= MAX_SAMPLE:
            raise ValueError("batches sample two to three scripts")
        if self.total_chars > self.budget:
            raise ValueError(f"batch of {self.total_chars} chars exceeds budget {self.budget}")


def sample_scripts(pool: list[Script], rng_seed: str | int,
                   budget: int = DEFAULT_BUDGET) -> list[Script]:
    """Deterministically pick 2-3 distinct scripts fitting the budget.

    The pool is shuffled by the seed and scripts are taken greedily when
    they fit, up to three. If a shuffle yields fewer than two, new shuffles
    are derived from the seed; as a last resort the smallest pair is taken.
    """
    if len(pool) < 2:
        raise BudgetInfeasible("pool has fewer than two scripts")
    base = sorted(pool, key=lambda s: s.script_id)

    for attempt in range(RESAMPLE_LIMIT):
        order = list(base)
        random.Random(f"{rng_seed}:{attempt}").shuffle(order)
        picked: list[Script] = []
        total = 0
        for script in order:
            if len(picked) == MAX_SAMPLE:
                break
            if total + len(script.text) <= budget:
                picked.append(script)
                total += len(script.text)
        if len(picked) >= MIN_SAMPLE:
            return picked

    pairs = sorted(
        ((len(a.text) + len(b.text), a.script_id, b.script_id, a, b)
         for i, a in enumerate(base) for b in base[i + 1:]),
        key=lambda t: (t[0], t[1], t[2]),
    )
    for total, _, _, a, b in pairs:
        if total <= budget:
            return [a, b]
    raise BudgetInfeasible(f"no script pair fits the {budget}-char budget")


def script_payload(sampled: list[Script]) -> str:
    return "\n".join(
        f"[SCRIPT id={s.script_id}]\n{s.text}\n[/SCRIPT]" for s in sampled
    )


def augment(sampled: list[Script], backend, ikec_enabled: bool = True,
            context: str = "", forge: PromptForge | None = None,
            attempt_tag: str = "0") -> Script:
    """Synthesize one new script from the sampled sources."""
    forge = forge or default_forge()
    messages = list(forge.render("augmentation", {
        "context": context if context.strip() else "(none)",
        "scripts": script_payload(sampled),
    }, ikec_enabled=ikec_enabled))
    parent_texts = {s.text for s in sampled}
    for _ in range(2):
        reply = backend.complete(ChatRequest(messages=tuple(messages))).strip()
        if reply and reply not in parent_texts:
            return Script(
                script_id=stable_id("aug-", *(s.script_id for s in sampled), attempt_tag),
                source="augmented",
                text=reply,
                parent_ids=tuple(s.script_id for s in sampled),
            )
        messages += [ChatMessage("assistant", reply or "(empty)"),
                     ChatMessage("user", _RETRY_DEGENERATE)]
    raise DegenerateOutput("model reproduced a source script twice")


def augment_pool(workspace: Workspace, n_target: int, rng_seed: str | int,
                 backend, budget: int = DEFAULT_BUDGET,
                 ikec_enabled: bool = True, forge: PromptForge | None = None,
                 context_provider=None) -> tuple[Script, ...]:
    """Grow the script pool by n_target synthesized scripts.

    Samples only original scripts, persists each success immediately, and
    gives up after 2 * n_target batches; partial results stay persisted and
    TargetUnreached reports the shortfall.
    """
    if n_target < 1:
        raise ValueError("n_target must be >= 1")
    forge = forge or default_forge()
    pool = list(workspace.get_scripts(source="original"))
    produced: list[Script] = []
    for attempt in range(2 * n_target):
        if len(produced) == n_target:
            break
        sampled = sample_scripts(pool, f"{rng_seed}:{attempt}", budget)
        context = context_provider(sampled) if context_provider else ""
        try:
            script = augment(sampled, backend, ikec_enabled, context, forge,
                             attempt_tag=str(attempt))
        except DegenerateOutput as exc:
            log.warning("skipping degenerate batch %d: %s", attempt, exc)
            continue
        workspace.replace_scripts([script])
        produced.append(script)
    if len(produced) < n_target:
        raise TargetUnreached(len(produced), n_target)
    return tuple(produced)
