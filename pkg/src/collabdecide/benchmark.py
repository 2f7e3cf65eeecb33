"""Accuracy reports, strategy/delta tables, cross-dataset grids and agent-count sweeps."""

from __future__ import annotations

import csv
import dataclasses
import io
import random
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .agents import sample_pool
from .datasets import McqaItem, ParseError, ValidationError, load_dataset
from .orchestrator import DecisionRecord, Strategy, run_items

if TYPE_CHECKING:
    from .config import RunConfig

__all__ = [
    "AccuracyReport", "AccuracyRow", "BenchmarkError", "ItemMismatch", "McqaItem", "ParseError",
    "ValidationError", "accuracy", "cross_dataset_grid", "evaluate_run", "format_cell", "format_grid",
    "format_table", "load_dataset", "scaling_csv", "scaling_table",
]


class BenchmarkError(ValueError):
    pass


class ItemMismatch(BenchmarkError):
    pass


@dataclass(frozen=True)
class AccuracyRow:
    strategy: str
    accuracy: float
    delta: float | None
    n_items: int
    subjects: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class AccuracyReport:
    dataset: str
    rows: tuple[AccuracyRow, ...]
    baseline: str | None
    metadata: dict = field(default_factory=dict)

    def row(self, strategy: str) -> AccuracyRow:
        return next(r for r in self.rows if r.strategy == strategy)

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "baseline": self.baseline,
            "rows": [r.to_json() for r in self.rows],
            "metadata": self.metadata,
        }


def accuracy(records: Iterable[DecisionRecord]) -> float:
    records = list(records)
    if not records:
        raise BenchmarkError("accuracy of an empty record set")
    return 100.0 * sum(r.correct for r in records) / len(records)


def _by_strategy(records: Iterable[DecisionRecord]) -> dict[str, list[DecisionRecord]]:
    groups: dict[str, list[DecisionRecord]] = {}
    for rec in records:
        groups.setdefault(rec.strategy.name, []).append(rec)
    return groups


def evaluate_run(
    records: Sequence[DecisionRecord],
    baseline: Sequence[DecisionRecord] | None = None,
    dataset: str = "",
    metadata: Mapping | None = None,
) -> AccuracyReport:
    """Per-strategy accuracy in percent, with deltas against the baseline records.

    Rows follow the order in which strategies first appear; the fold is
    otherwise independent of record order.
    """
    groups = _by_strategy(records)
    base_acc = base_name = None
    if baseline:
        base_groups = _by_strategy(baseline)
        if len(base_groups) != 1:
            raise BenchmarkError(f"baseline records must come from one strategy, got {sorted(base_groups)}")
        base_name = next(iter(base_groups))
        base_ids = sorted(r.item_id for r in baseline)
        for name, recs in groups.items():
            ids = sorted(r.item_id for r in recs)
            if ids != base_ids:
                raise ItemMismatch(f"{name} covers {len(ids)} items that differ from the baseline's {len(base_ids)}")
        base_acc = accuracy(baseline)
        if base_name not in groups:
            groups = {base_name: list(baseline), **groups}

    rows = []
    for name, recs in groups.items():
        acc = accuracy(recs)
        per_subject: dict[str, list[DecisionRecord]] = defaultdict(list)
        for rec in recs:
            if rec.subject is not None:
                per_subject[rec.subject].append(rec)
        subjects = {s: accuracy(per_subject[s]) for s in sorted(per_subject)}
        delta = None if base_acc is None else acc - base_acc
        rows.append(AccuracyRow(name, acc, delta, len(recs), subjects))

    meta = {"timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    meta.update(metadata or {})
    return AccuracyReport(dataset, tuple(rows), base_name, meta)


def _fmt(value: float) -> str:
    text = f"{value:.1f}"
    return "0.0" if text == "-0.0" else text


def _fmt_delta(value: float) -> str:
    text = f"{value:+.1f}"
    return "+0.0" if text == "-0.0" else text


def format_cell(accuracy: float, delta: float | None, is_baseline: bool = False) -> str:
    if delta is None or is_baseline:
        return _fmt(accuracy)
    return f"{_fmt(accuracy)}({_fmt_delta(delta)})"


def format_table(report: AccuracyReport) -> str:
    """Column-aligned text table; non-baseline rows carry their delta in parentheses."""
    header = ("strategy", report.dataset or "accuracy", "n")
    body = [
        (r.strategy, format_cell(r.accuracy, r.delta, r.strategy == report.baseline), str(r.n_items))
        for r in report.rows
    ]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(3)]
    lines = []
    for row in [header, *body]:
        lines.append(f"{row[0]:<{widths[0]}}  {row[1]:>{widths[1]}}  {row[2]:>{widths[2]}}".rstrip())
    return "\n".join(lines) + "\n"


# Report shapes --------------------------------------------------------------


def scaling_table(
    items: Sequence[McqaItem],
    counts: Sequence[int],
    config: "RunConfig",
    strategy: Strategy | None = None,
    workers: int = 1,
) -> list[tuple[int, float]]:
    """Accuracy of one strategy as the executor count grows.

    Each count draws one executor subset for the whole item set from
    ``random.Random(seeds.pool + count)``, so a count of 1 is one fixed agent.
    """
    strategy = strategy or config.strategies[0]
    pool = [config.agents[a] for a in config.executors]
    base_seed = config.seeds.pool or 0
    rows = []
    for count in counts:
        executors = sample_pool(pool, count, random.Random(base_seed + count))
        records = run_items(items, config, [strategy], workers, executors)
        rows.append((count, accuracy(records)))
    return rows


def scaling_csv(rows: Sequence[tuple[int, float]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["count", "accuracy"])
    for count, acc in rows:
        writer.writerow([count, _fmt(acc)])
    return buf.getvalue()


def cross_dataset_grid(
    configs: Mapping[str, "RunConfig"],
    datasets: Mapping[str, Sequence[McqaItem]],
    strategy: Strategy | None = None,
    workers: int = 1,
) -> dict[tuple[str, str], float]:
    """Cell (row, column) is the accuracy of the row's config run on the column's items."""
    grid = {}
    for row, config in configs.items():
        chosen = strategy or config.strategies[0]
        for col, items in datasets.items():
            grid[(row, col)] = accuracy(run_items(items, config, [chosen], workers))
    return grid


def format_grid(grid: Mapping[tuple[str, str], float]) -> str:
    rows = list(dict.fromkeys(r for r, _ in grid))
    cols = list(dict.fromkeys(c for _, c in grid))
    table = [["", *cols]] + [[r, *(_fmt(grid[(r, c)]) for c in cols)] for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(cols) + 1)]
    out = []
    for line in table:
        cells = [f"{line[0]:<{widths[0]}}"] + [f"{v:>{w}}" for v, w in zip(line[1:], widths[1:])]
        out.append("  ".join(cells).rstrip())
    return "\n".join(out) + "\n"
