"""Line-accuracy evaluation and the ablation experiment matrix.

The metric is Percentage of Correct Lines: error-free lines of the gold
answer divided by its total lines, clamped to [0, 1]. Error counts come
from human-authored annotation files; this module computes and tabulates,
it never judges code. The matrix driver prepares a workspace per
configuration group, runs every task, and reports mean PCL per
(group, chunk_size, top_k) cell.
"""

from __future__ import annotations

import csv
import io
import logging
import statistics
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .corpus import Workspace, read_jsonl
from .errors import EmptySet, ZeroTotal

log = logging.getLogger(__name__)

# group name -> (splitter, renovation, planner, method)
GROUPS: dict[str, tuple[str, str, str, str]] = {
    "Baseline - RAG": ("fixed", "off", "direct", "rag"),
    "Baseline - ReAct": ("fixed", "off", "direct", "react"),
    "RAG + Data Splitter": ("semantic", "off", "direct", "rag"),
    "Baseline - RAG + ChatEDA": ("fixed", "off", "chateda", "rag"),
    "Baseline - ReAct + ChatEDA": ("fixed", "off", "chateda", "react"),
    "RAG + Data Splitter + ChatEDA": ("semantic", "off", "chateda", "rag"),
    "RAG + Data Splitter + Renovation (no gate)": ("semantic", "no-gate", "direct", "rag"),
    "RAG + Data Splitter + Renovation (no gate) + ChatEDA": ("semantic", "no-gate", "chateda", "rag"),
    "RAG + Data Splitter + Renovation": ("semantic", "full", "direct", "rag"),
    "Our proposed": ("semantic", "full", "chateda", "rag"),
}

SPLITTER_MODES = ("fixed", "semantic")
RENOVATION_MODES = ("off", "no-gate", "full")
PLANNER_MODES = ("direct", "chateda")
METHODS = ("rag", "react")


@dataclass(frozen=True)
class LineAnnotation:
    """Human-graded line counts for one generated script."""

    task_id: str
    total_correct_lines: int
    error_lines: int
    notes: str = ""

    def __post_init__(self):
        if self.total_correct_lines < 1:
            raise ZeroTotal(f"total_correct_lines must be >= 1 for {self.task_id!r}")
        if self.error_lines < 0:
            raise ValueError("error_lines must be >= 0")


@dataclass(frozen=True)
class EvalReport:
    per_task: tuple[dict, ...]
    mean_pcl: float
    config_snapshot: dict


@dataclass(frozen=True)
class ExperimentConfig:
    """One cell of the ablation matrix."""

    group_name: str
    splitter: str
    renovation: str
    planner: str
    method: str
    chunk_size: int
    similarity_top_k: int
    temperature: float = 0.0
    model_id: str = "default"

    def __post_init__(self):
        if self.splitter not in SPLITTER_MODES:
            raise ValueError(f"bad splitter mode {self.splitter!r}")
        if self.renovation not in RENOVATION_MODES:
            raise ValueError(f"bad renovation mode {self.renovation!r}")
        if self.planner not in PLANNER_MODES:
            raise ValueError(f"bad planner mode {self.planner!r}")
        if self.method not in METHODS:
            raise ValueError(f"bad method {self.method!r}")
        expected = GROUPS.get(self.group_name)
        if expected is not None:
            actual = (self.splitter, self.renovation, self.planner, self.method)
            if actual != expected:
                raise ValueError(
                    f"flags {actual} contradict group {self.group_name!r} {expected}")

    @classmethod
    def for_group(cls, group_name: str, chunk_size: int,
                  similarity_top_k: int) -> ExperimentConfig:
        try:
            splitter, renovation, planner, method = GROUPS[group_name]
        except KeyError:
            raise ValueError(f"unknown group {group_name!r}") from None
        return cls(group_name=group_name, splitter=splitter,
                   renovation=renovation, planner=planner, method=method,
                   chunk_size=chunk_size, similarity_top_k=similarity_top_k)

    def snapshot(self) -> dict:
        return {
            "group_name": self.group_name,
            "splitter": self.splitter,
            "renovation": self.renovation,
            "planner": self.planner,
            "method": self.method,
            "chunk_size": self.chunk_size,
            "top_k": self.similarity_top_k,
            "temperature": self.temperature,
            "model_id": self.model_id,
        }


def pcl(annotation: LineAnnotation) -> float:
    """Fraction of correct lines, clamped to [0, 1]."""
    total = annotation.total_correct_lines
    value = (total - annotation.error_lines) / total
    return min(max(value, 0.0), 1.0)


def aggregate(annotations: list[LineAnnotation],
              config_snapshot: dict | None = None) -> EvalReport:
    """Per-task pcl plus the arithmetic mean across tasks."""
    if not annotations:
        raise EmptySet("no annotations to aggregate")
    per_task = tuple(
        {"task_id": a.task_id, "pcl": pcl(a)} for a in annotations
    )
    return EvalReport(
        per_task=per_task,
        mean_pcl=statistics.mean(entry["pcl"] for entry in per_task),
        config_snapshot=config_snapshot or {},
    )


def format_pct(value: float) -> str:
    """Percentage with two decimals, half-up: 0.8621 -> '86.21%'."""
    quantized = Decimal(str(value * 100)).quantize(Decimal("0.01"),
                                                   rounding=ROUND_HALF_UP)
    return f"{quantized}%"


def load_annotations(path: str | Path) -> list[dict]:
    """Raw annotation rows; optional group_name/chunk_size/top_k scoping."""
    return read_jsonl(Path(path))


def _annotation_for(rows: list[dict], task_id: str,
                    config: ExperimentConfig) -> LineAnnotation | None:
    """Most-specific matching row wins; generic task rows are the fallback."""
    best = None
    best_rank = -1
    for row in rows:
        if row.get("task_id") != task_id:
            continue
        rank = 0
        ok = True
        for key, want in (("group_name", config.group_name),
                          ("chunk_size", config.chunk_size),
                          ("top_k", config.similarity_top_k)):
            if key in row:
                if row[key] != want:
                    ok = False
                    break
                rank += 1
        if ok and rank > best_rank:
            best, best_rank = row, rank
    if best is None:
        return None
    return LineAnnotation(task_id=task_id,
                          total_correct_lines=best["total"],
                          error_lines=best["errors"],
                          notes=best.get("notes", ""))


def run_matrix(workspace: Workspace, tasks: list, group_names: list[str],
               chunk_sizes: list[int], top_ks: list[int], backend,
               annotation_rows: list[dict], seed: str | int = 0,
               constant: float = 0.0, ikec: bool = True,
               chunk_unit: str = "chars",
               context_cap: int = 6000) -> list[EvalReport]:
    """Evaluate every (group, chunk_size, top_k) cell of the ablation grid.

    Preprocessing runs once per distinct (splitter, renovation, chunk_size)
    signature in a derived sub-workspace, so groups sharing preparation
    reuse it and the parent workspace is never mutated. Retrieval-free
    sweep axes only re-run generation. A failing cell is recorded as a
    null report (mean_pcl nan) and the matrix continues. Groups using the
    reason/act method ignore the sweep and run at its first point.
    """
    from . import pipeline

    cells: list[tuple[ExperimentConfig, str]] = []
    for name in group_names:
        splitter, renovation, planner, method = GROUPS[name]
        points = ([(chunk_sizes[0], top_ks[0])] if method == "react"
                  else [(c, k) for c in chunk_sizes for k in top_ks])
        for c, k in points:
            sig = f"{splitter}-{renovation}-c{c}"
            cells.append((ExperimentConfig.for_group(name, c, k), sig))
    cells.sort(key=lambda item: (item[1], item[0].group_name,
                                 item[0].chunk_size, item[0].similarity_top_k))

    reports: list[EvalReport] = []
    prepared: dict[str, Workspace] = {}
    for config, sig in cells:
        snapshot = config.snapshot()
        try:
            if sig not in prepared:
                prepared[sig] = pipeline.prepare_cell_workspace(
                    workspace, config, backend, seed=seed, constant=constant,
                    ikec=ikec, chunk_unit=chunk_unit)
            cell_ws = prepared[sig]
            per_cell = pipeline.run_cell_tasks(
                cell_ws, tasks, config, backend, ikec=ikec,
                context_cap=context_cap)
            annotations = []
            for task in tasks:
                ann = _annotation_for(annotation_rows, task.task_id, config)
                if ann is not None:
                    annotations.append(ann)
            if not annotations:
                raise EmptySet(f"no annotations match cell {snapshot}")
            report = aggregate(annotations, {**snapshot,
                                             "generated": len(per_cell)})
        except Exception as exc:
            log.warning("cell %s failed: %s", snapshot, exc)
            report = EvalReport(per_task=(), mean_pcl=float("nan"),
                                config_snapshot={**snapshot,
                                                 "error": str(exc)})
        reports.append(report)
    return reports


def matrix_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["group_name", "chunk_size", "top_k", "tasks", "mean_pcl"])
    for report in reports:
        snap = report.config_snapshot
        value = ("" if report.mean_pcl != report.mean_pcl
                 else format_pct(report.mean_pcl))
        writer.writerow([snap.get("group_name", ""), snap.get("chunk_size", ""),
                         snap.get("top_k", ""), len(report.per_task), value])
    return buf.getvalue()


def matrix_table(reports: list[EvalReport]) -> str:
    """Aligned plain-text table of the matrix results."""
    rows = [("group", "chunk_size", "top_k", "tasks", "mean_pcl")]
    for report in reports:
        snap = report.config_snapshot
        value = ("n/a" if report.mean_pcl != report.mean_pcl
                 else format_pct(report.mean_pcl))
        rows.append((str(snap.get("group_name", "")),
                     str(snap.get("chunk_size", "")),
                     str(snap.get("top_k", "")),
                     str(len(report.per_task)), value))
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * widths[j] for j in range(5)))
    return "\n".join(lines) + "\n"
