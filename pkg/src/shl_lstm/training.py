"""Loss, metrics, Adam and the epoch loop with best-on-validation checkpointing."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import Dataset, ShapeMismatch, ShlError, one_hot
from .nn.checkpoint import save_checkpoint
from .nn.model import ModelParams, model_backward, model_forward, predict_proba

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class InvalidDistribution(ShlError, ValueError):
    pass


class EmptyBatch(ShlError, ValueError):
    pass


class DivergedLoss(ShlError):
    """Training produced a non-finite loss; carries the best result so far."""

    def __init__(self, epoch: int, best: ModelParams, history: "TrainHistory"):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.best = best
        self.history = history


def categorical_crossentropy(probs: np.ndarray, y: np.ndarray) -> float:
    """-log p[true], with p clamped at 1e-12. Batches return the mean loss."""
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if probs.shape != y.shape:
        raise ShapeMismatch(f"probs {probs.shape} and targets {y.shape} differ")
    if np.any(probs < 0) or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-6):
        raise InvalidDistribution("probabilities must be non-negative and sum to 1")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise InvalidDistribution("targets must be one-hot")
    p_true = np.maximum(np.sum(probs * y, axis=1), PROB_FLOOR)
    return float(np.mean(-np.log(p_true)))


def categorical_accuracy(probs: np.ndarray, labels: Sequence[int]) -> float:
    """Fraction of rows whose argmax matches the label code (1-based).

    Ties resolve to the lowest class index.
    """
    probs = np.atleast_2d(np.asarray(probs))
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyBatch("accuracy of an empty batch is undefined")
    if probs.shape[0] != labels.size:
        raise ShapeMismatch("one label per probability row required")
    return float(np.mean(np.argmax(probs, axis=1) + 1 == labels))


# Adam ------------------------------------------------------------------------

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: ModelParams | Sequence[np.ndarray], **kw) -> "AdamState":
        arrays = params.arrays() if isinstance(params, ModelParams) else list(params)
        return cls([np.zeros_like(a) for a in arrays], [np.zeros_like(a) for a in arrays], **kw)


def adam_step(params, grads, state: AdamState):
    """One Adam update. Pure: returns ``(new_params, new_state)``.

    ``params``/``grads`` may be :class:`ModelParams` or lists of arrays.
    """
    is_model = isinstance(params, ModelParams)
    p_arr = params.arrays() if is_model else [np.asarray(a, dtype=np.float64) for a in params]
    g_arr = grads.arrays() if isinstance(grads, ModelParams) else [np.asarray(a, dtype=np.float64) for a in grads]
    if len(p_arr) != len(g_arr) or len(p_arr) != len(state.m) or any(
        p.shape != g.shape or p.shape != m.shape for p, g, m in zip(p_arr, g_arr, state.m)
    ):
        raise ShapeMismatch("params, grads and optimizer state must have matching shapes")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** t
    corr2 = 1.0 - b2 ** t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        new_p.append(p - state.lr * (m / corr1) / (np.sqrt(v / corr2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, t, state.lr, b1, b2, state.eps)
    return (params.with_arrays(new_p) if is_model else new_p), new_state


# training loop ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 197
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def best(self) -> EpochRecord | None:
        return self.records[self.best_epoch - 1] if self.best_epoch else None


class BestCheckpoint:
    """Tracks the best validation accuracy; ties keep the earlier epoch."""

    def __init__(self):
        self.best_acc = -math.inf
        self.best_epoch = 0

    def update(self, epoch: int, val_acc: float) -> bool:
        if val_acc > self.best_acc:
            self.best_acc, self.best_epoch = val_acc, epoch
            return True
        return False


def evaluate(params: ModelParams, ds: Dataset) -> tuple[float, float]:
    """Eval-mode ``(loss, accuracy)`` over a whole split."""
    probs = predict_proba(ds.X, params)
    return (categorical_crossentropy(probs, one_hot(ds.y, params.n_classes)),
            categorical_accuracy(probs, ds.y))


def train(model: ModelParams, train_ds: Dataset, val_ds: Dataset, cfg: TrainConfig = TrainConfig(),
          checkpoint_dir: str | Path | None = None) -> tuple[ModelParams, TrainHistory]:
    """Minibatch Adam training with best-on-validation checkpointing.

    Each epoch shuffles with a generator seeded from ``cfg.seed``, updates on
    every minibatch (dropout active), then scores the full training and
    validation splits in eval mode. When validation accuracy strictly
    improves, ``ckpt_epoch_<n>.bin`` and ``ckpt_best.bin`` are written to
    ``checkpoint_dir`` (if given). Returns the best parameters and history.
    """
    for ds in (train_ds, val_ds):
        if ds.feature_dim != model.feature_dim:
            raise ShapeMismatch(f"dataset feature_dim {ds.feature_dim} != model {model.feature_dim}")
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise EmptyBatch("training and validation splits must be nonempty")
    ckdir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckdir is not None:
        ckdir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(cfg.seed)
    Y = one_hot(train_ds.y, model.n_classes)
    params = model.copy()
    state = AdamState.zeros_like(params, lr=cfg.lr)
    history = TrainHistory()
    tracker = BestCheckpoint()
    best = params.copy()

    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(train_ds))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            _, cache = model_forward(train_ds.X[idx], params, train=True, seed=rng)
            grads = model_backward(cache, Y[idx], params)
            params, state = adam_step(params, grads, state)

        if not all(np.all(np.isfinite(a)) for a in params.arrays()):
            raise DivergedLoss(epoch, best, history)
        train_loss, train_acc = evaluate(params, train_ds)
        val_loss, val_acc = evaluate(params, val_ds)
        history.records.append(EpochRecord(epoch, train_loss, train_acc, val_loss, val_acc))
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergedLoss(epoch, best, history)
        if tracker.update(epoch, val_acc):
            best = params.copy()
            if ckdir is not None:
                save_checkpoint(best, ckdir / f"ckpt_epoch_{epoch}.bin")
                save_checkpoint(best, ckdir / "ckpt_best.bin")
        history.best_epoch = tracker.best_epoch
        log.info("epoch %d: loss %.4f acc %.4f | val_loss %.4f val_acc %.4f%s", epoch, train_loss, train_acc,
                 val_loss, val_acc, " *" if tracker.best_epoch == epoch else "")
    return best, history


# metrics CSV -----------------------------------------------------------------

HISTORY_FIELDS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


def save_history(history: TrainHistory, path: str | Path) -> None:
    if not history.records:
        raise ValueError("cannot save an empty history")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for r in history.records:
            writer.writerow([r.epoch, repr(r.train_loss), repr(r.train_acc), repr(r.val_loss), repr(r.val_acc)])


def load_history(path: str | Path) -> TrainHistory:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != HISTORY_FIELDS:
            raise ShlError(f"{path}: unexpected history header {reader.fieldnames}")
        records = [EpochRecord(int(row["epoch"]), float(row["train_loss"]), float(row["train_acc"]),
                               float(row["val_loss"]), float(row["val_acc"])) for row in reader]
    tracker = BestCheckpoint()
    for r in records:
        tracker.update(r.epoch, r.val_acc)
    return TrainHistory(records, tracker.best_epoch)
