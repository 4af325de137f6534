"""Weighted cross-entropy training with SGD + momentum, and the evaluation
metric suite (accuracy, precision, recall, F1, AUC, confusion counts)."""

from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ShapeError
from .features import ClassWeights, RecordFeatures
from .models import CAttentionModel, LegOutput, UnifiedTrace
from .tensor import Tensor

PROBABILITY_FLOOR = 1e-12


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 16
    class_weights: ClassWeights = field(default_factory=ClassWeights)
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be positive, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be positive, got {self.batch_size}")


def weighted_cross_entropy(probs: Tensor, label: int, weights: ClassWeights) -> Tensor:
    """-w_label * log(p_label), with the probability floored before the log."""
    return probs[int(label)].clamp_min(PROBABILITY_FLOOR).log() * (-weights.for_label(label))


def sgd_momentum_step(
    params: list[np.ndarray],
    grads: list[np.ndarray],
    velocities: list[np.ndarray],
    lr: float,
    momentum: float,
) -> None:
    """v <- momentum * v + grad; param <- param - lr * v (all in place)."""
    for param, grad, velocity in zip(params, grads, velocities, strict=True):
        if param.shape != grad.shape or param.shape != velocity.shape:
            raise ShapeError(
                f"update shapes disagree: param {param.shape}, grad {grad.shape}, "
                f"velocity {velocity.shape}"
            )
        velocity *= momentum
        velocity += grad
        param -= lr * velocity


class SgdMomentum:
    def __init__(self, params: list[Tensor], lr: float, momentum: float):
        self.params = list(params)
        self.lr = lr
        self.momentum = momentum
        self.velocities = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        grads = [
            p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params
        ]
        sgd_momentum_step(
            [p.data for p in self.params], grads, self.velocities, self.lr, self.momentum
        )


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    val_acc: float


@dataclass
class TrainResult:
    model: CAttentionModel
    history: list[EpochStats]
    best_epoch: int
    best_val_loss: float


def _forward_features(model: CAttentionModel, rf: RecordFeatures):
    return model.forward(rf.pos, rf.emb)


def _validation_stats(
    model: CAttentionModel, records: list[RecordFeatures], weights: ClassWeights
) -> tuple[float, float]:
    total_loss = 0.0
    correct = 0
    for rf in records:
        probs, _ = _forward_features(model, rf)
        total_loss += float(weighted_cross_entropy(probs, rf.label, weights).data)
        correct += int(np.argmax(probs.data)) == rf.label
    return total_loss / len(records), correct / len(records)


def train(
    model: CAttentionModel,
    train_set: list[RecordFeatures],
    validation_set: list[RecordFeatures],
    config: TrainConfig,
) -> TrainResult:
    """Mini-batch SGD + momentum on the weighted cross-entropy.

    Deterministic for a fixed seed. Returns the model holding the parameters
    of the best validation-loss epoch, plus the per-epoch history.
    """
    if not train_set or not validation_set:
        raise ConfigError("train and validation splits must both be nonempty")
    optimizer = SgdMomentum(model.parameters(), config.learning_rate, config.momentum)
    rng = np.random.default_rng(config.seed)
    history: list[EpochStats] = []
    best_loss = np.inf
    best_epoch = 0
    best_state = model.parameter_state()

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(train_set))
        running_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            optimizer.zero_grad()
            scale = 1.0 / len(batch)
            for i in batch:
                rf = train_set[i]
                probs, _ = _forward_features(model, rf)
                loss = weighted_cross_entropy(probs, rf.label, config.class_weights)
                running_loss += float(loss.data)
                (loss * scale).backward()
            optimizer.step()
        val_loss, val_acc = _validation_stats(model, validation_set, config.class_weights)
        history.append(
            EpochStats(epoch, running_loss / len(train_set), val_loss, val_acc)
        )
        if val_loss < best_loss:
            best_loss = val_loss
            best_epoch = epoch
            best_state = model.parameter_state()

    model.load_parameter_state(best_state)
    return TrainResult(model=model, history=history, best_epoch=best_epoch, best_val_loss=best_loss)


def write_epoch_log(history: list[EpochStats], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_acc"])
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss), repr(row.val_acc)])


# -- metrics -------------------------------------------------------------------


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    tn: int
    fp: int
    fn: int
    tp: int

    def to_json_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
            "tn": self.tn,
            "fp": self.fp,
            "fn": self.fn,
            "tp": self.tp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, separators=(",", ":"))

    def format_table(self) -> str:
        header = ["Accuracy", "Precision", "Recall", "F1", "AUC", "TN", "FP", "FN", "TP"]
        values = [
            f"{self.accuracy:.4f}",
            f"{self.precision:.4f}",
            f"{self.recall:.4f}",
            f"{self.f1:.4f}",
            "-" if self.auc is None else f"{self.auc:.4f}",
            str(self.tn),
            str(self.fp),
            str(self.fn),
            str(self.tp),
        ]
        widths = [max(len(h), len(v)) for h, v in zip(header, values)]
        head = "  ".join(h.ljust(w) for h, w in zip(header, widths))
        body = "  ".join(v.ljust(w) for v, w in zip(values, widths))
        return f"{head}\n{body}"


def metrics_from_confusion(tn: int, fp: int, fn: int, tp: int, auc: float | None = None) -> MetricsReport:
    """All ratio metrics from the confusion counts (patient = positive class)."""
    total = tn + fp + fn + tp
    if total == 0:
        raise ConfigError("confusion counts sum to zero")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        auc=auc,
        tn=tn,
        fp=fp,
        fn=fn,
        tp=tp,
    )


def mann_whitney_auc(scores, labels) -> float | None:
    """Rank statistic over positive-class scores; ties contribute one half.

    Returns None (with a warning) when the labels are single-class.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        warnings.warn("AUC undefined on a single-class label set", stacklevel=2)
        return None
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def run_inference(
    model: CAttentionModel,
    records: list[RecordFeatures],
    workers: int = 1,
) -> list[tuple[np.ndarray, LegOutput | UnifiedTrace]]:
    """Forward every record, in order. Each record builds an independent
    graph, so a small thread pool is safe when workers > 1."""

    def one(rf: RecordFeatures):
        probs, trace = _forward_features(model, rf)
        return probs.data.copy(), trace

    if workers <= 1:
        return [one(rf) for rf in records]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, records))


def evaluate(
    model: CAttentionModel, records: list[RecordFeatures], workers: int = 1
) -> MetricsReport:
    """Score a test set: confusion counts, ratio metrics, and rank AUC."""
    if not records:
        raise ConfigError("cannot evaluate an empty record set")
    outputs = run_inference(model, records, workers=workers)
    labels = np.array([rf.label for rf in records])
    scores = np.array([probs[1] for probs, _ in outputs])
    preds = np.array([int(np.argmax(probs)) for probs, _ in outputs])
    tp = int(((preds == 1) & (labels == 1)).sum())
    tn = int(((preds == 0) & (labels == 0)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    return metrics_from_confusion(tn, fp, fn, tp, auc=mann_whitney_auc(scores, labels))
