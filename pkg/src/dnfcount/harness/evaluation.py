"""Threshold accuracy, heat-map and per-iteration trace exports."""
from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..nn.model import ModelConfig, batch_graphs, encode_graph, forward_batch, frozen, predict_many
from ..nn.train import TrainingRecord

DEFAULT_THRESHOLDS = (0.02, 0.05, 0.10, 0.15)


@dataclass
class EvalReport:
    thresholds: list[float]
    count: int
    overall: list[float]
    by_n: dict[int, list[float]] = field(default_factory=dict)
    by_width: dict[int, list[float]] = field(default_factory=dict)
    baseline: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "thresholds": self.thresholds,
            "count": self.count,
            "overall": self.overall,
            "by_n": {str(k): v for k, v in sorted(self.by_n.items())},
            "by_width": {str(k): v for k, v in sorted(self.by_width.items())},
            "best_constant_baseline": self.baseline,
        }


def accuracy(pred_prob: np.ndarray, label_prob: np.ndarray, thresholds: Sequence[float]) -> list[float]:
    """Percentage of pairs with ``|pred - label| <= t`` for each threshold."""
    diff = np.abs(np.asarray(pred_prob) - np.asarray(label_prob))
    if diff.size == 0:
        return [0.0 for _ in thresholds]
    return [100.0 * float(np.mean(diff <= t)) for t in thresholds]


def best_constant_accuracy(label_prob: np.ndarray, t: float) -> float:
    """Best accuracy (%) any single constant prediction reaches at threshold ``t``.

    An interval ``[c - t, c + t]`` covering the most labels can be taken to
    start at a label, so a two-pointer sweep over sorted labels is exact.
    """
    y = np.sort(np.asarray(label_prob, dtype=np.float64))
    if y.size == 0:
        return 0.0
    hi = np.searchsorted(y, y + 2.0 * t, side="right")
    return 100.0 * float(np.max(hi - np.arange(y.size))) / y.size


def predict_records(params, cfg: ModelConfig, records: Sequence[TrainingRecord], batch_size: int = 64):
    return predict_many([r.formula for r in records], [r.probs for r in records], params, cfg, batch_size)


def evaluate(params, cfg: ModelConfig, records: Sequence[TrainingRecord], thresholds=DEFAULT_THRESHOLDS) -> EvalReport:
    means, _ = predict_records(params, cfg, records)
    pred = np.exp(means)
    label = np.exp([r.label_mean for r in records])
    return report_from_predictions(pred, label, records, thresholds)


def report_from_predictions(pred, label, records: Sequence[TrainingRecord], thresholds=DEFAULT_THRESHOLDS) -> EvalReport:
    thresholds = [float(t) for t in thresholds]
    groups_n = defaultdict(list)
    groups_w = defaultdict(list)
    for i, r in enumerate(records):
        groups_n[r.formula.n].append(i)
        groups_w[int(r.formula.widths.max())].append(i)
    pred, label = np.asarray(pred), np.asarray(label)
    return EvalReport(
        thresholds=thresholds,
        count=len(records),
        overall=accuracy(pred, label, thresholds),
        by_n={k: accuracy(pred[v], label[v], thresholds) for k, v in groups_n.items()},
        by_width={k: accuracy(pred[v], label[v], thresholds) for k, v in groups_w.items()},
        baseline=[best_constant_accuracy(label, t) for t in thresholds],
    )


def heatmap(label_prob, pred_prob, bins: int = 10) -> np.ndarray:
    """Counts on a ``bins x bins`` grid over [0, 1]^2; rows are KLM, columns the network."""
    if bins < 2:
        raise ValueError("need at least 2 bins")
    x = np.clip(np.asarray(label_prob, dtype=np.float64), 0.0, 1.0)
    y = np.clip(np.asarray(pred_prob, dtype=np.float64), 0.0, 1.0)
    counts, _, _ = np.histogram2d(x, y, bins=bins, range=[[0.0, 1.0], [0.0, 1.0]])
    return counts.astype(np.int64)


def heatmap_export(params, cfg: ModelConfig, records: Sequence[TrainingRecord], bins: int = 10) -> np.ndarray:
    means, _ = predict_records(params, cfg, records)
    return heatmap(np.exp([r.label_mean for r in records]), np.exp(means), bins)


def trace_table(params, cfg: ModelConfig, formulas, weights, iterations: int | None = None) -> np.ndarray:
    """Predicted probability after every message-passing iteration, one row per formula."""
    graphs = [encode_graph(f) for f in formulas]
    res = forward_batch(frozen(params), cfg, batch_graphs(graphs, weights), iterations, trace=True)
    if not res.trace:
        return np.zeros((len(formulas), 0))
    return np.exp(np.stack([mu for mu, _ in res.trace], axis=1))


def write_matrix_csv(path, matrix: np.ndarray, header: Sequence[str] | None = None, index: Sequence | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for i, row in enumerate(matrix):
            cells = [repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row.tolist()]
            w.writerow(([index[i]] if index is not None else []) + cells)
