"""Micro-F1 scoring of pair sets and cross-dataset aggregation.

Counts are pooled over all samples: tp = sum |pred ∩ gold|,
fp = sum |pred \\ gold|, fn = sum |gold \\ pred|. Aggregation averages the
per-dataset percent scores for each (method, model) and reports them
rounded half-up to two decimals.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Mapping, Sequence


class LengthMismatch(Exception):
    pass


@dataclass(frozen=True)
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    micro_f1: float
    per_sample: tuple[tuple[str, int, int, int], ...]
    n_format_failures: int = 0
    n_missing_records: int = 0


def score(
    preds: Sequence[frozenset],
    golds: Sequence[frozenset],
    ids: Sequence[str] | None = None,
    n_format_failures: int = 0,
    n_missing_records: int = 0,
) -> EvalReport:
    """Score index-aligned predicted vs gold pair sets."""
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(golds)} golds")
    if ids is None:
        ids = [str(i) for i in range(len(preds))]
    elif len(ids) != len(preds):
        raise LengthMismatch(f"{len(ids)} ids vs {len(preds)} predictions")
    per_sample = []
    tp = fp = fn = 0
    for sid, pred, gold in zip(ids, preds, golds):
        s_tp = len(pred & gold)
        s_fp = len(pred - gold)
        s_fn = len(gold - pred)
        per_sample.append((sid, s_tp, s_fp, s_fn))
        tp += s_tp
        fp += s_fp
        fn += s_fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    denom = precision + recall
    micro_f1 = 2 * precision * recall / denom if denom else 0.0
    return EvalReport(
        tp, fp, fn, precision, recall, micro_f1,
        tuple(per_sample), n_format_failures, n_missing_records,
    )


def round_half_up(value: float, places: int = 2) -> float:
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class AggregateReport:
    """Per-cell percent scores plus per-(method, model) means over datasets."""

    datasets: tuple[str, ...]
    methods: tuple[str, ...]
    models: tuple[str, ...]
    cells: dict  # (dataset, method, model) -> percent score
    means: dict  # (method, model) -> percent mean, rounded half-up to 2 dp
    stds: dict  # (method, model) -> across-dataset sample std, same rounding


def aggregate(cells: Mapping[tuple[str, str, str], float]) -> AggregateReport:
    """Average per-dataset percent scores for every (method, model).

    Every (method, model) combination must cover the same dataset set;
    the mean is computed in decimal arithmetic so the half-up rounding of
    exact two-decimal inputs cannot be perturbed by float noise.
    """
    if not cells:
        raise ValueError("no cells to aggregate")
    datasets: list[str] = []
    methods: list[str] = []
    models: list[str] = []
    for dataset, method, model in cells:
        if dataset not in datasets:
            datasets.append(dataset)
        if method not in methods:
            methods.append(method)
        if model not in models:
            models.append(model)
    means: dict = {}
    stds: dict = {}
    for method in methods:
        for model in models:
            values = []
            for dataset in datasets:
                key = (dataset, method, model)
                if key not in cells:
                    raise ValueError(f"incomplete grid: missing cell {key}")
                values.append(cells[key])
            mean = sum(Decimal(str(v)) for v in values) / len(values)
            means[(method, model)] = float(
                mean.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
            )
            std = statistics.stdev(values) if len(values) > 1 else 0.0
            stds[(method, model)] = round_half_up(std)
    return AggregateReport(
        tuple(datasets), tuple(methods), tuple(models), dict(cells), means, stds
    )


def read_score_rows(path: str | Path) -> list[tuple[str, str, str, float]]:
    """Read (method, model, dataset, score) rows from a CSV file.

    A header row is detected by an unparseable fourth column and skipped.
    """
    rows: list[tuple[str, str, str, float]] = []
    with open(path, newline="", encoding="utf-8") as handle:
        for lineno, row in enumerate(csv.reader(handle), 1):
            if not row or not any(cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            method, model, dataset = (cell.strip() for cell in row[:3])
            try:
                value = float(row[3])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: non-numeric score {row[3]!r}") from None
            rows.append((method, model, dataset, value))
    if not rows:
        raise ValueError(f"{path}: no score rows found")
    return rows


def cells_from_rows(rows: Sequence[tuple[str, str, str, float]]) -> dict:
    cells: dict = {}
    for method, model, dataset, value in rows:
        key = (dataset, method, model)
        if key in cells:
            raise ValueError(f"duplicate cell for {key}")
        cells[key] = value
    return cells


def render_summary_table(agg: AggregateReport) -> str:
    """Mean ± std per (method, model), averaged over the datasets."""
    label = "Method"
    width = max(len(label), *(len(m) for m in agg.methods)) + 2
    col = max(14, *(len(m) + 2 for m in agg.models))
    lines = [label.ljust(width) + "".join(m.rjust(col) for m in agg.models)]
    for method in agg.methods:
        cells = []
        for model in agg.models:
            mean = agg.means[(method, model)]
            std = agg.stds[(method, model)]
            cells.append(f"{mean:.2f} ± {std:.2f}".rjust(col))
        lines.append(method.ljust(width) + "".join(cells))
    return "\n".join(lines)


def render_detailed_table(agg: AggregateReport) -> str:
    """Per-dataset percent scores, one row per (dataset, method)."""
    d_width = max(len("Dataset"), *(len(d) for d in agg.datasets)) + 2
    m_width = max(len("Method"), *(len(m) for m in agg.methods)) + 2
    col = max(10, *(len(m) + 2 for m in agg.models))
    lines = [
        "Dataset".ljust(d_width)
        + "Method".ljust(m_width)
        + "".join(m.rjust(col) for m in agg.models)
    ]
    for dataset in agg.datasets:
        for method in agg.methods:
            row = dataset.ljust(d_width) + method.ljust(m_width)
            for model in agg.models:
                row += f"{agg.cells[(dataset, method, model)]:.2f}".rjust(col)
            lines.append(row)
    return "\n".join(lines)


def aggregate_to_json(agg: AggregateReport) -> dict:
    detailed: dict = {}
    for (dataset, method, model), value in agg.cells.items():
        detailed.setdefault(dataset, {}).setdefault(method, {})[model] = value
    summary: dict = {}
    for (method, model), mean in agg.means.items():
        summary.setdefault(method, {})[model] = {
            "mean": mean,
            "std": agg.stds[(method, model)],
        }
    return {"summary": summary, "detailed": detailed}
