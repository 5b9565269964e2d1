"""Predictions, confusion matrices and precision/recall/F1 reports."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import LABELS, N_CLASSES, Dataset, Label, ShapeMismatch, ShlError, label_from_code
from .nn.model import ModelParams, predict_proba


class LengthMismatch(ShlError, ValueError):
    pass


class EmptyMatrix(ShlError, ValueError):
    pass


# Published validation confusion matrix of the reference model (hand position,
# unbalanced, 12177 windows). Class order follows Label. The source does not
# say which axis is "true"; rows are taken as true classes here, and per-class
# F1 does not depend on that choice.
PUBLISHED_CONFUSION = np.array([
    [1339, 12, 0, 171, 56, 33, 45, 81],
    [15, 1057, 16, 477, 19, 14, 3, 8],
    [0, 2, 262, 2, 0, 1, 0, 0],
    [61, 6, 1, 683, 205, 32, 1, 4],
    [93, 2, 1, 209, 1292, 289, 38, 62],
    [86, 16, 2, 176, 420, 1168, 62, 37],
    [100, 2, 0, 31, 65, 48, 628, 920],
    [105, 4, 0, 38, 153, 31, 167, 1326],
], dtype=np.int64)
PUBLISHED_F1 = 0.6368


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true class, columns = predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ShapeMismatch("confusion matrix must be square")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def transpose(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts.T)


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_f1: float
    weighted_f1: float
    support: np.ndarray


def _codes(labels) -> np.ndarray:
    return np.fromiter((int(v) for v in labels), dtype=np.int64)


def predict(model: ModelParams, ds: Dataset) -> list[Label]:
    """Eval-mode argmax per sample, ties to the lowest class."""
    if len(ds) == 0:
        return []
    if ds.feature_dim != model.feature_dim:
        raise ShapeMismatch(f"dataset feature_dim {ds.feature_dim} != model {model.feature_dim}")
    probs = predict_proba(ds.X, model)
    return [Label(int(k) + 1) for k in np.argmax(probs, axis=1)]


def confusion(preds: Sequence[int], truth: Sequence[int], n_classes: int = N_CLASSES) -> ConfusionMatrix:
    p, t = _codes(preds), _codes(truth)
    if p.size != t.size:
        raise LengthMismatch(f"{p.size} predictions vs {t.size} labels")
    if p.size == 0:
        raise EmptyMatrix("no samples to tabulate")
    if min(p.min(), t.min()) < 1 or max(p.max(), t.max()) > n_classes:
        raise ValueError(f"label codes must lie in 1..{n_classes}")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t - 1, p - 1), 1)
    return ConfusionMatrix(counts)


def metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Accuracy and per-class/macro/weighted F1; zero denominators give 0."""
    c = cm.counts
    total = c.sum()
    if total == 0:
        raise EmptyMatrix("confusion matrix has no samples")
    tp = np.diag(c).astype(np.float64)
    rows = c.sum(axis=1)
    cols = c.sum(axis=0)

    def ratio(num, den):
        return np.divide(num, den, out=np.zeros_like(num), where=den > 0)

    precision = ratio(tp, cols.astype(np.float64))
    recall = ratio(tp, rows.astype(np.float64))
    f1 = ratio(2.0 * tp, (rows + cols).astype(np.float64))
    return MetricsReport(
        accuracy=float(tp.sum() / total),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(f1.mean()),
        weighted_f1=float(np.dot(f1, rows) / total),
        support=rows,
    )


def label_histogram(labels) -> dict[Label, int]:
    counts = np.bincount(_codes(labels), minlength=N_CLASSES + 1)
    if counts.size > N_CLASSES + 1:
        raise ValueError("label codes must lie in 1..8")
    return {lab: int(counts[lab]) for lab in LABELS}


def write_histogram(hist: dict[Label, int], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "count"])
        for lab in LABELS:
            w.writerow([lab.name, hist.get(lab, 0)])


def write_predictions(preds, path: str | Path) -> None:
    Path(path).write_text("".join(f"{int(p)}\n" for p in preds), encoding="utf-8")


def read_predictions(path: str | Path) -> list[Label]:
    return [label_from_code(int(tok)) for tok in Path(path).read_text(encoding="utf-8").split()]


def _class_names(n: int) -> list[str]:
    return [Label(i + 1).name for i in range(n)] if n == N_CLASSES else [str(i + 1) for i in range(n)]


def write_confusion(cm: ConfusionMatrix, path: str | Path) -> None:
    names = _class_names(cm.counts.shape[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *names])
        for name, row in zip(names, cm.counts):
            w.writerow([name, *row.tolist()])


def read_confusion(path: str | Path) -> ConfusionMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return ConfusionMatrix(np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64))


def write_report(rep: MetricsReport, path: str | Path) -> None:
    names = _class_names(rep.f1.size)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1", "support"])
        for i, name in enumerate(names):
            w.writerow([name, f"{rep.precision[i]:.6f}", f"{rep.recall[i]:.6f}", f"{rep.f1[i]:.6f}",
                        int(rep.support[i])])
        total = int(rep.support.sum())
        w.writerow(["accuracy", "", "", f"{rep.accuracy:.6f}", total])
        w.writerow(["macro_f1", "", "", f"{rep.macro_f1:.6f}", total])
        w.writerow(["weighted_f1", "", "", f"{rep.weighted_f1:.6f}", total])


def published_check(reported: float = PUBLISHED_F1) -> dict[str, dict[str, float]]:
    """Recompute summary metrics from the published matrix and compare each to ``reported``."""
    rep = metrics(ConfusionMatrix(PUBLISHED_CONFUSION))
    values = {"accuracy": rep.accuracy, "macro_f1": rep.macro_f1, "weighted_f1": rep.weighted_f1}
    return {k: {"value": v, "reported": reported, "delta": v - reported} for k, v in values.items()}
