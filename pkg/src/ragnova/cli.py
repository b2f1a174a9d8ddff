"""Command-line entry point wiring every pipeline stage.

Exit codes: 0 success, 1 stage failure, 2 usage error. One invocation
holds the workspace's advisory lock for its whole duration.
"""

from __future__ import annotations

import argparse
import logging
import sys

from filelock import Timeout

from . import pipeline
from .codegen import run_task
from .config import WorkspaceConfig
from .corpus import SCRIPT_DOC_ID, ingest_document
from .errors import RagnovaError, UsageError
from .evaluator import (
    GROUPS,
    LineAnnotation,
    aggregate,
    format_pct,
    load_annotations,
    matrix_csv,
    matrix_table,
    run_matrix,
)
from .renovator import renovate_corpus
from .retrieval import VectorIndex, build_index, chunk_texts, context_blocks, query
from .splitter import split_document

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragnova",
        description="Retrieval-augmented preprocessing and code generation.")
    parser.add_argument("--workspace", help="workspace directory")
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--backend", help="mock | replay | record | live")
    parser.add_argument("--seed", help="run seed (all randomness derives from it)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a page-delimited text file")
    p.add_argument("--path", required=True)
    p.add_argument("--doc-id", required=True)
    p.add_argument("--title")
    p.add_argument("--page-marker", help="regex page delimiter (default: form feed)")

    p = sub.add_parser("split", help="split a document into chunks")
    p.add_argument("--doc", required=True)
    p.add_argument("--strategy", choices=("semantic", "fixed"))
    p.add_argument("--chunk-size", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--unit", choices=("chars", "words"))
    p.add_argument("--collection", default="main", choices=("main", "pre"))

    p = sub.add_parser("renovate", help="renovate chunks with gated adoption")
    p.add_argument("--doc", help="limit to one document (default: all)")
    p.add_argument("--constant", type=float, help="acceptance threshold")
    p.add_argument("--mode", choices=("full", "no-gate"))
    p.add_argument("--no-ikec", action="store_true")
    p.add_argument("--no-rag", action="store_true",
                   help="renovate without retrieval context")

    p = sub.add_parser("augment", help="synthesize new reference scripts")
    p.add_argument("--n", type=int, required=True, help="target script count")
    p.add_argument("--budget", type=int, help="sample character budget")
    p.add_argument("--no-ikec", action="store_true")

    p = sub.add_parser("index", help="embed a chunk collection")
    p.add_argument("--which", required=True, choices=("pre", "final"))

    p = sub.add_parser("query", help="top-k retrieval against an index")
    p.add_argument("--text", required=True)
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--which", default="final", choices=("pre", "final"))

    p = sub.add_parser("generate", help="run generation tasks")
    p.add_argument("--task", default="all", help="task id or 'all'")

    p = sub.add_parser("eval", help="evaluation commands")
    esub = p.add_subparsers(dest="eval_command", required=True)
    e = esub.add_parser("pcl", help="aggregate PCL over an annotation file")
    e.add_argument("--annotations", required=True)
    e = esub.add_parser("matrix", help="run the ablation matrix")
    e.add_argument("--groups", required=True,
                   help="comma-separated group names, or 'all'")
    e.add_argument("--chunk-sizes", required=True,
                   help="comma-separated chunk sizes")
    e.add_argument("--top-k", required=True, help="comma-separated top-k values")
    e.add_argument("--annotations", help="annotation file (default: workspace)")

    p = sub.add_parser("pipeline", help="full pipeline runs")
    psub = p.add_subparsers(dest="pipeline_command", required=True)
    psub.add_parser("run", help="run every stage in order")

    return parser


def _load_config(args) -> WorkspaceConfig:
    overrides = {
        "workspace_path": args.workspace,
        "backend": args.backend,
        "seed": args.seed,
    }
    return WorkspaceConfig.load(args.config, overrides=overrides)


def _int_list(raw: str, flag: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"{flag} wants comma-separated integers, got {raw!r}")


def _cmd_ingest(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    ws.ensure_layout()
    doc = ingest_document(ws, args.path, args.doc_id, title=args.title,
                          page_marker=args.page_marker)
    print(f"ingested {doc.doc_id}: {len(doc.pages)} pages")
    return 0


def _cmd_split(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    doc = ws.get_document(args.doc)
    strategy = args.strategy or cfg.strategy
    backend = cfg.make_backend() if strategy == "semantic" else None
    chunks = split_document(
        ws, doc, strategy, backend,
        chunk_size=args.chunk_size or cfg.chunk_size,
        overlap_ratio=cfg.overlap_ratio if args.overlap is None else args.overlap,
        unit=args.unit or cfg.chunk_unit,
        collection=args.collection)
    print(f"split {doc.doc_id} into {len(chunks)} chunks ({args.collection})")
    return 0


def _cmd_renovate(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    backend = cfg.make_backend()
    mode = args.mode or cfg.renovation
    chunks = [c for c in ws.get_chunks("main", doc_id=args.doc)
              if c.doc_id != SCRIPT_DOC_ID and c.state == "raw"]
    if not chunks:
        print("no raw chunks to renovate")
        return 0
    context_provider = None
    if cfg.renovation_rag and not args.no_rag:
        pre_index = VectorIndex.load(ws.index_path(pipeline.PRE_INDEX))
        if len(pre_index):
            texts = chunk_texts(ws, (pipeline.PRE_COLLECTION,))

            def context_provider(chunk):
                hits = query(pre_index, chunk.text, cfg.top_k, backend)
                return "\n\n".join(context_blocks(hits, texts))[:cfg.context_cap]

    constant = cfg.constant if args.constant is None else args.constant
    _, records = renovate_corpus(
        ws, chunks, backend, constant=constant,
        ikec_enabled=cfg.ikec and not args.no_ikec,
        context_provider=context_provider, gate=mode == "full")
    accepted = sum(1 for r in records if r.accepted == "accepted")
    print(f"renovated {len(records)} chunks: {accepted} accepted, "
          f"{len(records) - accepted} rejected")
    return 0


def _cmd_augment(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    backend = cfg.make_backend()
    pre_index = VectorIndex.load(ws.index_path(pipeline.PRE_INDEX))
    texts = chunk_texts(ws, (pipeline.PRE_COLLECTION,))

    def context_for(sampled):
        heads = [next((ln for ln in s.text.splitlines() if ln.strip()), "")
                 for s in sampled]
        q = "; ".join(h for h in heads if h)
        if not q.strip() or not len(pre_index):
            return ""
        hits = query(pre_index, q, cfg.top_k, backend)
        return "\n\n".join(context_blocks(hits, texts))[:cfg.context_cap]

    from .augmentor import augment_pool
    produced = augment_pool(
        ws, args.n, cfg.seed, backend,
        budget=args.budget or cfg.augment_budget,
        ikec_enabled=cfg.ikec and not args.no_ikec,
        context_provider=context_for)
    for script in produced:
        print(f"augmented {script.script_id} <- {', '.join(script.parent_ids)}")
    return 0


def _cmd_index(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    backend = cfg.make_backend()
    if args.which == "pre":
        index = build_index(ws, pipeline.PRE_COLLECTION, pipeline.PRE_INDEX, backend)
    else:
        index = pipeline.stage_index_final(ws, cfg, backend)
    print(f"indexed {len(index)} chunks ({args.which})")
    return 0


def _cmd_query(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    backend = cfg.make_backend()
    index = VectorIndex.load(ws.index_path(args.which))
    for hit in query(index, args.text, args.k, backend):
        print(f"{hit.rank}\t{hit.score:.6f}\t{hit.chunk_id}")
    return 0


def _cmd_generate(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    backend = cfg.make_backend()
    tasks = pipeline.load_tasks(ws)
    if args.task != "all":
        tasks = [t for t in tasks if t.task_id == args.task]
        if not tasks:
            raise UsageError(f"no task {args.task!r} in workspace")
    index = VectorIndex.load(ws.index_path(pipeline.FINAL_INDEX))
    texts = chunk_texts(ws, (pipeline.MAIN_COLLECTION,))
    snapshot = cfg.generation_snapshot()
    snapshot["context_cap"] = cfg.context_cap
    for task in tasks:
        run_task(ws, task, index, backend, snapshot, texts_by_id=texts)
        print(f"generated {ws.generated_dir / (task.task_id + '.script')}")
    return 0


def _cmd_eval(args, cfg: WorkspaceConfig) -> int:
    ws = cfg.workspace()
    if args.eval_command == "pcl":
        rows = load_annotations(args.annotations)
        annotations = [LineAnnotation(task_id=r["task_id"],
                                      total_correct_lines=r["total"],
                                      error_lines=r["errors"],
                                      notes=r.get("notes", ""))
                       for r in rows]
        report = aggregate(annotations)
        for entry in report.per_task:
            print(f"{entry['task_id']}: {format_pct(entry['pcl'])}")
        print(f"mean: {format_pct(report.mean_pcl)}")
        return 0

    backend = cfg.make_backend()
    if args.groups.strip() == "all":
        group_names = list(GROUPS)
    else:
        group_names = [g.strip() for g in args.groups.split(",") if g.strip()]
        unknown = [g for g in group_names if g not in GROUPS]
        if unknown:
            raise UsageError(f"unknown groups: {unknown}; known: {list(GROUPS)}")
    chunk_sizes = _int_list(args.chunk_sizes, "--chunk-sizes")
    top_ks = _int_list(args.top_k, "--top-k")
    if not chunk_sizes or not top_ks:
        raise UsageError("--chunk-sizes and --top-k must be non-empty")
    tasks = pipeline.load_tasks(ws)
    if not tasks:
        raise UsageError("workspace has no generation tasks")
    ann_path = args.annotations or ws.annotations_path
    rows = load_annotations(ann_path)
    reports = run_matrix(ws, tasks, group_names, chunk_sizes, top_ks, backend,
                         rows, seed=cfg.seed, constant=cfg.constant,
                         ikec=cfg.ikec, chunk_unit=cfg.chunk_unit,
                         context_cap=cfg.context_cap)
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    csv_text = matrix_csv(reports)
    table = matrix_table(reports)
    (ws.reports_dir / "matrix.csv").write_text(csv_text, encoding="utf-8")
    (ws.reports_dir / "matrix.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    return 0


def _cmd_pipeline(args, cfg: WorkspaceConfig) -> int:
    pipeline.run_pipeline(cfg)
    ws = cfg.workspace()
    print(f"pipeline complete: {ws.root}")
    return 0


_HANDLERS = {
    "ingest": _cmd_ingest,
    "split": _cmd_split,
    "renovate": _cmd_renovate,
    "augment": _cmd_augment,
    "index": _cmd_index,
    "query": _cmd_query,
    "generate": _cmd_generate,
    "eval": _cmd_eval,
    "pipeline": _cmd_pipeline,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        handler = _HANDLERS[args.command]
        with cfg.workspace().lock():
            return handler(args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Timeout:
        print("error: workspace is locked by another invocation", file=sys.stderr)
        return 1
    except RagnovaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
