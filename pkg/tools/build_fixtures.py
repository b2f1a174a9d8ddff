"""Rebuild the shipped fixture workspace and its recorded exchange log.

Composes a small documentation corpus (a 50-page guide whose pages often
break mid-sentence, plus two short companion documents), four seed scripts,
three generation tasks, and line annotations. Runs the full pipeline once
with every chat completion recorded, checks that the run exercised the
interesting paths (renovation acceptances and rejections, a chunk spanning
a page break, multi-parent augmented scripts), then strips the derived
state so the shipped workspace holds only inputs plus the exchange log.
A replay run must rebuild the stripped state byte for byte; this script
verifies that too.

Usage: python3 tools/build_fixtures.py
"""

from __future__ import annotations

import hashlib
import random
import shutil
import sys
import tempfile
from pathlib import Path

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURE_ROOT = REPO_ROOT / "fixtures" / "workspace"

from ragnova.config import WorkspaceConfig
from ragnova.corpus import (
    Document,
    Page,
    Script,
    Workspace,
    read_jsonl,
    write_jsonl,
)
from ragnova.gateway import ExchangeStore, MockChatBackend, RecordingBackend
from ragnova.pipeline import run_pipeline
from ragnova.renovator import RenovationRecord

GUIDE_PAGES = 50

_FUNCTIONS = (
    ("build_mesh", "rebuilds the analysis grid from the active floorplan"),
    ("load_view", "opens a design view and registers it as the active one"),
    ("run_drc_scan", "walks every routing layer and records rule violations"),
    ("report_grid", "summarizes grid occupancy into a printable table"),
    ("estimate_power", "integrates switching activity into a power ledger"),
    ("export_summary", "writes the collected results to the report folder"),
    ("route_design", "connects the placed cells along the preferred layers"),
    ("snapshot_timing", "captures a timing snapshot for later comparison"),
    ("audit_layers", "checks layer usage against the technology profile"),
    ("bind_profile", "attaches a configuration profile to the session"),
    ("collect_metrics", "gathers run statistics from all finished stages"),
    ("verify_rules", "confirms the loaded rule deck matches the process"),
)

_FOLLOW_UPS = (
    "It accepts the usual keyword overrides and keeps the defaults otherwise.",
    "The call is cheap to repeat because intermediate data is cached.",
    "Results land in the session store under the name of the calling stage.",
    "A missing prerequisite raises a toolkit error instead of guessing.",
    "Large designs stream their data so memory stays roughly constant.",
    "The helper logs one summary line per invocation at the info level.",
    "Its output feeds directly into the reporting helpers without conversion.",
    "Passing an explicit view overrides whichever view is currently active.",
)


def _guide_paragraphs(count: int, rng: random.Random) -> list[str]:
    """Deterministic reference-manual prose, one function per paragraph."""
    out = []
    for i in range(count):
        name, role = _FUNCTIONS[i % len(_FUNCTIONS)]
        first = f"The {name} helper {role}."
        extras = rng.sample(_FOLLOW_UPS, 1 + rng.randrange(2))
        out.append(" ".join([first, *extras]))
    return out


def _mid_sentence_cut(words: list[str]) -> int | None:
    """Word index to break at so neither half ends a sentence cleanly."""
    start = min(len(words) - 3, (len(words) * 2) // 3)
    for cut in range(start, 2, -1):
        if not words[cut - 1].endswith((".", "!", "?", ":", ",")):
            return cut
    return None


def _paginate(paragraphs: list[str], pages: int) -> list[str]:
    """Lay paragraphs onto pages, breaking many of them mid-sentence.

    A broken page keeps the front half of its last paragraph; the back half
    opens the next page so the two pages only read correctly when rejoined.
    """
    counts = [2 + (p % 2) for p in range(1, pages + 1)]
    if sum(counts) != len(paragraphs):
        raise ValueError(f"need exactly {sum(counts)} paragraphs, got {len(paragraphs)}")
    out = []
    lead = ""
    idx = 0
    for page_no, count in enumerate(counts, start=1):
        block = paragraphs[idx:idx + count]
        idx += count
        if page_no < pages and page_no % 3 != 0:
            words = block[-1].split()
            cut = _mid_sentence_cut(words)
            if cut is not None:
                block[-1] = " ".join(words[:cut])
                text = "\n\n".join([lead, *block] if lead else block)
                lead = " ".join(words[cut:])
                out.append(text)
                continue
        text = "\n\n".join([lead, *block] if lead else block)
        lead = ""
        out.append(text)
    if lead:
        raise ValueError("pagination left an unterminated paragraph")
    return out


def _documents() -> list[Document]:
    rng = random.Random(2024)
    pages_needed = sum(2 + (p % 2) for p in range(1, GUIDE_PAGES + 1))
    guide_pages = _paginate(_guide_paragraphs(pages_needed, rng), GUIDE_PAGES)
    guide = Document(
        doc_id="toolkit-guide",
        title="Toolkit Function Guide",
        pages=tuple(Page(i, text) for i, text in enumerate(guide_pages, start=1)),
    )

    install = Document(
        doc_id="install-notes",
        title="Installation Notes",
        pages=(
            Page(1, "Install the toolkit from the internal package index with the "
                    "usual installer command.\n\nA virtual environment per project "
                    "keeps the solver libraries from clashing."),
            Page(2, "After installation, run the bundled self check once.\n\nThe "
                    "self check loads a demo floorplan and verifies that meshing, "
                    "routing, and reporting all complete."),
            Page(3, "Upgrades keep the session store format stable.\n\nOld report "
                    "folders remain readable, though regenerated tables may order "
                    "their columns differently."),
        ),
    )

    reference = Document(
        doc_id="toolkit-reference",
        title="Session And Reporting Reference",
        pages=(
            Page(1, "A session owns one active view, one configuration profile, "
                    "and a store of named results.\n\nEvery helper reads and "
                    "writes through the session, which is why call order matters "
                    "for the stateful stages."),
            Page(2, "The reporting helpers collect named results into tables.\n\n"
                    "A table remembers which stage produced each column, so a "
                    "rerun of a single stage refreshes"),
            Page(3, "only the columns that stage owns while the rest keep their "
                    "previous values.\n\nSaved reports are plain files that diff "
                    "cleanly between runs."),
            Page(4, "Profiles bundle the technology settings, the rule deck "
                    "choice, and the reporting defaults.\n\nSwitching profiles "
                    "mid-session is allowed but discards cached intermediates."),
        ),
    )
    return [guide, install, reference]


def _scripts() -> list[Script]:
    texts = {
        "s-drc-report": (
            "import toolkit\n"
            "from toolkit import reporting\n\n"
            "view = toolkit.load_view('routed')\n"
            "violations = toolkit.run_drc_scan(view)\n"
            "table = reporting.new_report('drc')\n"
            "table['violations'] = violations.by_layer()\n"
            "reporting.save(table, 'drc_report.json')\n"
        ),
        "s-flow-setup": (
            "import toolkit\n"
            "from toolkit import reporting\n\n"
            "toolkit.bind_profile('default')\n"
            "view = toolkit.load_view('top')\n"
            "mesh = toolkit.build_mesh(view)\n"
            "report = reporting.new_report('flow setup')\n"
            "report['grid'] = toolkit.report_grid(mesh)\n"
            "reporting.save(report, 'flow_setup.json')\n"
        ),
        "s-power-audit": (
            "import toolkit\n"
            "from toolkit import reporting\n\n"
            "view = toolkit.load_view('routed')\n"
            "ledger = toolkit.estimate_power(view)\n"
            "audit = toolkit.audit_layers(view)\n"
            "table = reporting.new_report('power')\n"
            "table['ledger'] = ledger.by_block()\n"
            "table['layers'] = audit.summary()\n"
            "reporting.save(table, 'power_audit.json')\n"
        ),
        "s-timing-scan": (
            "import toolkit\n\n"
            "view = toolkit.load_view('top')\n"
            "before = toolkit.snapshot_timing(view)\n"
            "toolkit.route_design(view)\n"
            "after = toolkit.snapshot_timing(view)\n"
            "print(after.delta(before))\n"
        ),
    }
    return [Script(script_id=sid, source="original", text=text)
            for sid, text in texts.items()]


def _tasks() -> list[dict]:
    return [
        {"task_id": "t-mesh", "difficulty": 2, "reference_script_id": "s-flow-setup",
         "query": "Build the analysis mesh for the active design view, "
                  "then report the grid statistics."},
        {"task_id": "t-drc", "difficulty": 6, "reference_script_id": "s-drc-report",
         "query": "Load the routed design, run the design rule scan, "
                  "and export the violation summary."},
        {"task_id": "t-power", "difficulty": 9, "reference_script_id": "s-power-audit",
         "query": "Estimate switching power for each block, aggregate the "
                  "results by layer, and write the audit table."},
    ]


def _annotations() -> list[dict]:
    return [
        {"task_id": "t-mesh", "total": 29, "errors": 4},
        {"task_id": "t-drc", "total": 29, "errors": 2},
        {"task_id": "t-power", "total": 30, "errors": 8},
    ]


def compose(ws: Workspace) -> None:
    ws.ensure_layout()
    for doc in _documents():
        ws.put_document(doc)
    ws.put_scripts(_scripts())
    write_jsonl(ws.tasks_path, _tasks())
    write_jsonl(ws.annotations_path, _annotations())


def digest_tree(root: Path) -> dict[str, str]:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != ".lock"
    }


def verify_recorded_run(ws: Workspace) -> None:
    records = [RenovationRecord.from_dict(r) for r in read_jsonl(ws.renovations_path)]
    accepted = sum(1 for r in records if r.accepted == "accepted")
    rejected = sum(1 for r in records if r.accepted == "rejected")
    if not (accepted and rejected):
        raise SystemExit(f"need both outcomes, got {accepted} accepted / {rejected} rejected")

    cross = [c for c in ws.get_chunks("main")
             if c.doc_id != "scripts" and c.page_span[0] != c.page_span[1]]
    if not cross:
        raise SystemExit("no chunk spans a page break")

    augmented = ws.get_scripts(source="augmented")
    if len(augmented) < 2 or any(len(s.parent_ids) < 2 for s in augmented):
        raise SystemExit("augmentation did not produce multi-parent scripts")

    for task in read_jsonl(ws.tasks_path):
        if not (ws.generated_dir / f"{task['task_id']}.script").exists():
            raise SystemExit(f"missing generated script for {task['task_id']}")
    if not (ws.reports_dir / "eval.txt").exists():
        raise SystemExit("missing evaluation report")
    print(f"  renovations: {accepted} accepted, {rejected} rejected, "
          f"{len(records)} total")
    print(f"  cross-page chunks: {len(cross)}")
    print(f"  augmented scripts: {len(augmented)}")


def strip_derived(ws: Workspace) -> None:
    """Drop everything a replay run can rebuild; keep inputs and exchanges."""
    for sub in ("chunks", "index", "renovations", "generated", "reports"):
        target = ws.root / sub
        if target.exists():
            shutil.rmtree(target)
    originals = [s.to_dict() for s in ws.get_scripts(source="original")]
    write_jsonl(ws.scripts_path, originals)
    lock = ws.root / ".lock"
    if lock.exists():
        lock.unlink()


def verify_replay(recorded: dict[str, str]) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        copy = Path(tmp) / "workspace"
        shutil.copytree(FIXTURE_ROOT, copy)
        cfg = WorkspaceConfig(workspace_path=str(copy), backend="replay")
        run_pipeline(cfg)
        replayed = digest_tree(copy)
        if replayed != recorded:
            diff = {k for k in recorded.keys() | replayed.keys()
                    if recorded.get(k) != replayed.get(k)}
            raise SystemExit(f"replay does not rebuild the recorded state: {sorted(diff)}")
    print("  replay rebuilds the recorded state byte for byte")


def main() -> int:
    if FIXTURE_ROOT.exists():
        shutil.rmtree(FIXTURE_ROOT)
    ws = Workspace(FIXTURE_ROOT)
    print(f"composing inputs under {FIXTURE_ROOT}")
    compose(ws)

    print("recording a full pipeline run")
    cfg = WorkspaceConfig(workspace_path=str(FIXTURE_ROOT), backend="mock")
    backend = RecordingBackend(MockChatBackend(), ExchangeStore(ws.exchanges_path))
    run_pipeline(cfg, backend=backend)
    n_exchanges = sum(1 for _ in ExchangeStore(ws.exchanges_path).iter_exchanges())
    print(f"  recorded {n_exchanges} exchanges")

    verify_recorded_run(ws)
    recorded = digest_tree(FIXTURE_ROOT)

    print("stripping derived state")
    strip_derived(ws)

    print("verifying replay")
    verify_replay(recorded)

    write_jsonl(REPO_ROOT / "fixtures" / "preliminary_annotations.jsonl", [
        {"task_id": "p-mesh", "total": 10, "errors": 1},
        {"task_id": "p-route", "total": 10, "errors": 2},
        {"task_id": "p-drc", "total": 30, "errors": 8},
        {"task_id": "p-timing", "total": 10, "errors": 4},
        {"task_id": "p-power", "total": 30, "errors": 11},
    ])
    print("wrote fixtures/preliminary_annotations.jsonl")
    print("done")
    return 0


if __name__ == "__main__":
    sys.exit(main())
