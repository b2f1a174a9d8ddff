"""Stage orchestration: full pipeline runs and ablation-cell preparation.

Stage order for a full run: fixed pre-split and pre-index (the
untouched-source substrate), script augmentation against that substrate,
semantic split, renovation with corpus-wide gating, final index over
renovated chunks plus all scripts, generation, evaluation. Each stage is
idempotent under a deterministic backend, so re-running a pipeline leaves
the workspace byte-identical.
"""

from __future__ import annotations

import json
import logging
import shutil

from .augmentor import augment_pool
from .codegen import GenerationTask, run_task
from .config import WorkspaceConfig
from .corpus import SCRIPT_DOC_ID, Script, Workspace, read_jsonl
from .errors import TargetUnreached
from .evaluator import (
    EvalReport,
    ExperimentConfig,
    LineAnnotation,
    aggregate,
    format_pct,
)
from .prompt_forge import default_forge
from .renovator import renovate_corpus
from .retrieval import VectorIndex, build_index, chunk_texts, context_blocks, query
from .splitter import split_document

log = logging.getLogger(__name__)

PRE_INDEX = "pre"
FINAL_INDEX = "final"
PRE_COLLECTION = "pre"
MAIN_COLLECTION = "main"


def _capped_context(blocks: list[str], cap: int) -> str:
    """Join rank-ordered blocks, dropping from the lowest rank to fit."""
    kept: list[str] = []
    total = 0
    for block in blocks:
        extra = len(block) + (2 if kept else 0)
        if total + extra > cap:
            break
        kept.append(block)
        total += extra
    return "\n\n".join(kept)


def stage_pre(workspace: Workspace, cfg: WorkspaceConfig, backend) -> VectorIndex:
    """Fixed-split every document into the pre collection and index it."""
    for doc in workspace.list_documents():
        split_document(workspace, doc, "fixed", chunk_size=cfg.chunk_size,
                       overlap_ratio=cfg.overlap_ratio, unit=cfg.chunk_unit,
                       collection=PRE_COLLECTION)
    return build_index(workspace, PRE_COLLECTION, PRE_INDEX, backend)


def stage_augment(workspace: Workspace, cfg: WorkspaceConfig, backend,
                  pre_index: VectorIndex) -> None:
    """Synthesize new scripts using the pre-preprocessing substrate."""
    if cfg.augment_target < 1:
        return
    originals = workspace.get_scripts(source="original")
    if len(originals) < 2:
        log.warning("augmentation skipped: need at least two original scripts")
        return
    texts = chunk_texts(workspace, (PRE_COLLECTION,))

    def context_for(sampled: list[Script]) -> str:
        heads = [next((ln for ln in s.text.splitlines() if ln.strip()), "")
                 for s in sampled]
        q = "; ".join(h for h in heads if h)
        if not q.strip() or not len(pre_index):
            return ""
        hits = query(pre_index, q, cfg.top_k, backend)
        return _capped_context(context_blocks(hits, texts), cfg.context_cap)

    try:
        augment_pool(workspace, cfg.augment_target, cfg.seed, backend,
                     budget=cfg.augment_budget, ikec_enabled=cfg.ikec,
                     context_provider=context_for)
    except TargetUnreached as exc:
        log.warning("augmentation fell short: %s", exc)


def stage_split(workspace: Workspace, cfg: WorkspaceConfig, backend) -> None:
    for doc in workspace.list_documents():
        split_document(workspace, doc, cfg.strategy, backend,
                       chunk_size=cfg.chunk_size,
                       overlap_ratio=cfg.overlap_ratio, unit=cfg.chunk_unit,
                       collection=MAIN_COLLECTION)


def stage_renovate(workspace: Workspace, cfg: WorkspaceConfig, backend,
                   pre_index: VectorIndex | None) -> None:
    if cfg.renovation == "off":
        return
    chunks = [c for c in workspace.get_chunks(MAIN_COLLECTION)
              if c.doc_id != SCRIPT_DOC_ID and c.state == "raw"]
    if not chunks:
        return
    context_provider = None
    if cfg.renovation_rag and pre_index is not None and len(pre_index):
        texts = chunk_texts(workspace, (PRE_COLLECTION,))

        def context_provider(chunk):
            hits = query(pre_index, chunk.text, cfg.top_k, backend)
            blocks = [b for b in context_blocks(hits, texts)]
            return _capped_context(blocks, cfg.context_cap)

    renovate_corpus(workspace, chunks, backend, constant=cfg.constant,
                    ikec_enabled=cfg.ikec, context_provider=context_provider,
                    gate=cfg.renovation == "full", collection=MAIN_COLLECTION)


def stage_index_final(workspace: Workspace, cfg: WorkspaceConfig, backend) -> VectorIndex:
    """Add every script as a single chunk, then embed the whole corpus."""
    script_chunks = [s.as_chunk() for s in workspace.get_scripts()]
    if script_chunks:
        workspace.replace_chunks(MAIN_COLLECTION, script_chunks)
    return build_index(workspace, MAIN_COLLECTION, FINAL_INDEX, backend)


def load_tasks(workspace: Workspace) -> list[GenerationTask]:
    return [GenerationTask.from_dict(r) for r in read_jsonl(workspace.tasks_path)]


def stage_generate(workspace: Workspace, cfg: WorkspaceConfig, backend) -> list:
    tasks = load_tasks(workspace)
    if not tasks:
        log.warning("no generation tasks in workspace")
        return []
    index = VectorIndex.load(workspace.index_path(FINAL_INDEX))
    texts = chunk_texts(workspace, (MAIN_COLLECTION,))
    snapshot = cfg.generation_snapshot()
    snapshot["context_cap"] = cfg.context_cap
    outputs = []
    for task in tasks:
        outputs.append(run_task(workspace, task, index, backend, snapshot,
                                texts_by_id=texts))
    return outputs


def stage_eval(workspace: Workspace, cfg: WorkspaceConfig) -> EvalReport | None:
    """Aggregate PCL over the workspace's annotation file, if present."""
    rows = [r for r in read_jsonl(workspace.annotations_path)
            if "group_name" not in r]
    if not rows:
        log.warning("no annotations in workspace; eval skipped")
        return None
    annotations = [LineAnnotation(task_id=r["task_id"],
                                  total_correct_lines=r["total"],
                                  error_lines=r["errors"],
                                  notes=r.get("notes", ""))
                   for r in rows]
    report = aggregate(annotations, cfg.generation_snapshot())
    workspace.reports_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "per_task": list(report.per_task),
        "mean_pcl": report.mean_pcl,
        "config": report.config_snapshot,
    }
    with (workspace.reports_dir / "eval.json").open("w", encoding="utf-8",
                                                    newline="\n") as fh:
        json.dump(payload, fh, sort_keys=True, ensure_ascii=False, indent=2)
        fh.write("\n")
    lines = [f"{e['task_id']}: {format_pct(e['pcl'])}" for e in report.per_task]
    lines.append(f"mean: {format_pct(report.mean_pcl)}")
    with (workspace.reports_dir / "eval.txt").open("w", encoding="utf-8",
                                                   newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return report


def run_pipeline(cfg: WorkspaceConfig, backend=None) -> None:
    """Run every stage in order on the configured workspace."""
    if backend is None:
        backend = cfg.make_backend()
    workspace = cfg.workspace()
    workspace.ensure_layout()
    pre_index = stage_pre(workspace, cfg, backend)
    stage_augment(workspace, cfg, backend, pre_index)
    stage_split(workspace, cfg, backend)
    stage_renovate(workspace, cfg, backend, pre_index)
    stage_index_final(workspace, cfg, backend)
    stage_generate(workspace, cfg, backend)
    stage_eval(workspace, cfg)


def prepare_cell_workspace(parent: Workspace, config: ExperimentConfig,
                           backend, seed: str | int = 0,
                           constant: float = 0.0, ikec: bool = True,
                           chunk_unit: str = "chars") -> Workspace:
    """Build a derived workspace preprocessed per one matrix signature.

    The parent's documents and scripts are copied in; splitting and
    renovation then run per the group flags. The parent itself is never
    modified, so matrix runs do not disturb pipeline outputs.
    """
    sig = f"{config.splitter}-{config.renovation}-c{config.chunk_size}"
    cell = Workspace(parent.root / "matrix" / sig)
    cell.ensure_layout()
    for src, dst in ((parent.documents_path, cell.documents_path),
                     (parent.scripts_path, cell.scripts_path)):
        if src.exists():
            dst.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(src, dst)

    cell_cfg = WorkspaceConfig(
        workspace_path=str(cell.root), backend="mock", seed=str(seed),
        strategy=config.splitter, chunk_size=config.chunk_size,
        chunk_unit=chunk_unit, renovation=config.renovation,
        constant=constant, top_k=config.similarity_top_k,
        planner=config.planner, method=config.method, ikec=ikec,
        augment_target=0,
    )
    pre_index = None
    if cell_cfg.renovation != "off":
        pre_index = stage_pre(cell, cell_cfg, backend)
    stage_split(cell, cell_cfg, backend)
    stage_renovate(cell, cell_cfg, backend, pre_index)
    stage_index_final(cell, cell_cfg, backend)
    return cell


def run_cell_tasks(cell: Workspace, tasks: list[GenerationTask],
                   config: ExperimentConfig, backend, ikec: bool = True,
                   context_cap: int = 6000) -> list:
    """Generate every task inside a prepared cell workspace."""
    index = VectorIndex.load(cell.index_path(FINAL_INDEX))
    texts = chunk_texts(cell, (MAIN_COLLECTION,))
    snapshot = config.snapshot()
    snapshot["ikec"] = ikec
    snapshot["context_cap"] = context_cap
    forge = default_forge()
    return [run_task(cell, task, index, backend, snapshot, forge=forge,
                     texts_by_id=texts) for task in tasks]
