"""Cross-entropy loss, Adam, the train/validate loop and classification metrics."""

from __future__ import annotations

import csv
import logging
import math
from collections.abc import Iterable
from pathlib import Path

import numpy as np
from pydantic import BaseModel, Field

from .config import settings
from .container import read_container, write_container
from .datasets import SplitData
from .errors import DataError, TrainingAborted, UsageError
from .layers import BatchNorm, softmax
from .models import NUM_CLASSES, POSITIVE_CLASS, Classifier
from .reports import HistoryRow, Metrics, TrainResult
from .tensor import NDTensor, Precision, Rng, precision

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_acc", "arch")
_SHUFFLE_SALT = 0x7E57AB1E
_EVAL_BATCH = 16


def sample_losses(logits: NDTensor, labels: np.ndarray) -> NDTensor:
    """Negative log-likelihood of every sample, computed from max-shifted logits.

    :raises DataError: On a label outside ``{0, 1}``.
    """
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[0] != labels.shape[0]:
        raise DataError(f"logits {logits.shape} and labels {labels.shape} disagree")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise DataError(f"Labels must lie in [0, {logits.shape[1] - 1}]")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    return log_norm - shifted[np.arange(logits.shape[0]), labels]


def cross_entropy(logits: NDTensor, labels: np.ndarray) -> tuple[float, NDTensor]:
    """Mean negative log-likelihood and its gradient ``(softmax - onehot) / N``.

    :raises DataError: On a label outside ``{0, 1}``.
    """
    loss = float(np.mean(sample_losses(logits, labels)))
    n = logits.shape[0]
    grad = softmax(logits)
    grad[np.arange(n), np.asarray(labels)] -= 1.0
    return loss, grad / n


class OptimState(BaseModel):
    """Hyperparameters and step counter of an Adam optimizer."""

    lr: float = Field(default_factory=lambda: settings.learning_rate, ge=0.0)
    beta1: float = Field(default_factory=lambda: settings.adam_beta1)
    beta2: float = Field(default_factory=lambda: settings.adam_beta2)
    eps: float = Field(default_factory=lambda: settings.adam_eps)
    step: int = 0


class Adam:
    """Adam with bias correction; moments are kept per parameter name."""

    def __init__(self, state: OptimState | None = None) -> None:
        self.state = state or OptimState()
        self.m: dict[str, NDTensor] = {}
        self.v: dict[str, NDTensor] = {}

    def step(self, named: Iterable[tuple[str, NDTensor, NDTensor]]) -> None:
        """Update parameters in place from their gradients.

        :raises TrainingAborted: When any gradient is not finite.
        """
        named = list(named)
        for name, _, grad in named:
            if not np.all(np.isfinite(grad)):
                raise TrainingAborted(f"Non-finite gradient in {name} at step {self.state.step + 1}")
        st = self.state
        st.step += 1
        correction1 = 1.0 - st.beta1 ** st.step
        correction2 = 1.0 - st.beta2 ** st.step
        for name, param, grad in named:
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
            elif self.m[name].shape != param.shape:
                raise UsageError(f"Moment shape for {name} does not match parameter shape")
            m, v = self.m[name], self.v[name]
            m *= st.beta1
            m += (1.0 - st.beta1) * grad
            v *= st.beta2
            v += (1.0 - st.beta2) * grad * grad
            update = st.lr * (m / correction1) / (np.sqrt(v / correction2) + st.eps)
            param -= update.astype(param.dtype, copy=False)


def adam_step(opt: Adam, model: Classifier) -> None:
    """Apply one Adam update to every parameter of ``model``."""
    opt.step(model.named_parameters())


class TrainConfig(BaseModel):
    epochs: int = Field(ge=1)
    batch_size: int = Field(default_factory=lambda: settings.batch_size, ge=1)
    lr: float = Field(default_factory=lambda: settings.learning_rate, ge=0.0)
    seed: int = 0
    checkpoint: Path
    precision: Precision = Field(default_factory=lambda: settings.precision)


def has_batchnorm(model: Classifier) -> bool:
    return any(isinstance(module, BatchNorm) for module in model.modules())


def batches(order: list[int], batch_size: int) -> list[list[int]]:
    """Consecutive batches; a trailing single sample joins the previous batch."""
    chunks = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2].extend(chunks.pop())
    return chunks


def predict_proba(
    model: Classifier,
    x: NDTensor,
    positive_class: int = POSITIVE_CLASS,
    batch_size: int = _EVAL_BATCH,
) -> NDTensor:
    """Probabilities of ``positive_class`` in eval mode, computed in fixed-size chunks."""
    model.eval()
    parts = [softmax(model.forward(x[i:i + batch_size]))[:, positive_class] for i in range(0, len(x), batch_size)]
    return np.concatenate(parts)


def confusion_metrics(y_true: np.ndarray, y_pred: np.ndarray, positive_class: int = POSITIVE_CLASS) -> Metrics:
    """Accuracy, precision and recall from hard predictions.

    Precision (recall) is 0 when no sample is predicted (labelled) positive.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.size == 0:
        raise UsageError("Cannot compute metrics on an empty split")
    pos_true = y_true == positive_class
    pos_pred = y_pred == positive_class
    tp = int(np.sum(pos_true & pos_pred))
    fp = int(np.sum(~pos_true & pos_pred))
    fn = int(np.sum(pos_true & ~pos_pred))
    tn = int(np.sum(~pos_true & ~pos_pred))
    return Metrics(
        accuracy=(tp + tn) / y_true.size,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


def decide(p_positive: NDTensor, threshold: float | None = None) -> np.ndarray:
    """Hard labels: intoxicated iff the probability exceeds the threshold."""
    threshold = settings.decision_threshold if threshold is None else threshold
    return (np.asarray(p_positive) > threshold).astype(np.int64)


def evaluate(model: Classifier, split: SplitData, positive_class: int = POSITIVE_CLASS) -> Metrics:
    """Metrics of ``model`` on a split at the 0.5 probability threshold."""
    if len(split) == 0:
        raise UsageError("Cannot evaluate on an empty split")
    if not 0 <= positive_class < NUM_CLASSES:
        raise UsageError(f"positive_class must be 0 or 1, got {positive_class}")
    p = predict_proba(model, split.x, positive_class)
    predicted = np.where(decide(p) == 1, positive_class, 1 - positive_class)
    return confusion_metrics(split.y, predicted, positive_class)


def save_checkpoint(path: str | Path, model: Classifier, epoch: int, val_acc: float) -> None:
    entries = dict(model.state_dict())
    entries["meta.epoch"] = np.array([epoch], dtype=np.float64)
    entries["meta.val_acc"] = np.array([val_acc], dtype=np.float64)
    write_container(path, entries)


def load_checkpoint(path: str | Path, model: Classifier) -> dict[str, float]:
    """Restore parameters and buffers; return the stored metadata."""
    entries = read_container(path)
    meta = {name.removeprefix("meta."): float(value[0]) for name, value in entries.items() if name.startswith("meta.")}
    model.load_state_dict({name: value for name, value in entries.items() if not name.startswith("meta.")})
    logger.info("Loaded checkpoint %s (epoch %s, val_acc %s)", path, meta.get("epoch"), meta.get("val_acc"))
    return meta


def write_history_csv(path: str | Path, rows: Iterable[HistoryRow], append: bool = False) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exists = append and path.exists()
    with path.open("a" if append else "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if not exists:
            writer.writerow(HISTORY_COLUMNS)
        for row in rows:
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.train_acc), repr(row.val_acc), row.arch])


def train_loop(model: Classifier, train: SplitData, val: SplitData, config: TrainConfig) -> TrainResult:
    """Train with Adam and cross-entropy, keeping the best-validation checkpoint.

    The checkpoint is rewritten only when validation accuracy strictly improves, so
    ties keep the earlier epoch.

    Every epoch runs in ``config.precision``; the model must have been built in it.

    :raises UsageError: On empty splits, a batch size that batch norm cannot use or
        parameters of another precision.
    :raises TrainingAborted: On non-finite values or checkpoint I/O failure; the
        exception carries the partial history.
    """
    if len(train) == 0 or len(val) == 0:
        raise UsageError("Training needs non-empty train and validation splits")
    if has_batchnorm(model) and config.batch_size < 2:
        raise UsageError("Batch size must be >= 2 for models with batch normalization")
    dtype = np.dtype(config.precision)
    stray = [name for name, value, _ in model.named_parameters() if value.dtype != dtype]
    if stray:
        raise UsageError(f"{model.arch_name} was built in another precision than {config.precision} (e.g. {stray[0]})")
    with precision(config.precision):
        optimizer = Adam(OptimState(lr=config.lr))
        shuffle_rng = Rng(config.seed ^ _SHUFFLE_SALT)
        history: list[HistoryRow] = []
        best_acc, best_epoch = -1.0, -1
        for epoch in range(config.epochs):
            model.train()
            total_loss, correct = 0.0, 0
            for batch in batches(shuffle_rng.permutation(len(train)), config.batch_size):
                x, y = train.x[batch].astype(dtype, copy=False), train.y[batch]
                model.zero_grad()
                logits = model.forward(x)
                loss, grad = cross_entropy(logits, y)
                if not math.isfinite(loss):
                    raise TrainingAborted(f"Non-finite loss at epoch {epoch}", history)
                model.backward(grad.astype(logits.dtype, copy=False))
                try:
                    adam_step(optimizer, model)
                except TrainingAborted as exc:
                    raise TrainingAborted(str(exc), history) from exc
                total_loss += loss * len(batch)
                correct += int(np.sum(logits.argmax(axis=1) == y))
            val_acc = evaluate(model, val).accuracy
            row = HistoryRow(
                arch=model.arch_name,
                epoch=epoch,
                train_loss=total_loss / len(train),
                train_acc=correct / len(train),
                val_acc=val_acc,
            )
            history.append(row)
            logger.info(
                "%s epoch %d: loss %.4f train_acc %.4f val_acc %.4f",
                model.arch_name, epoch, row.train_loss, row.train_acc, val_acc,
            )
            if val_acc > best_acc:
                best_acc, best_epoch = val_acc, epoch
                try:
                    save_checkpoint(config.checkpoint, model, epoch, val_acc)
                except OSError as exc:
                    logger.error("Writing checkpoint %s failed: %s", config.checkpoint, exc)
                    raise TrainingAborted(f"Checkpoint write failed: {exc}", history) from exc
                logger.info("New best validation accuracy %.4f at epoch %d", val_acc, epoch)
    return TrainResult(
        arch=model.arch_name,
        best_epoch=best_epoch,
        best_val_acc=best_acc,
        checkpoint=str(config.checkpoint),
        history=history,
    )


__all__ = [
    "Adam",
    "OptimState",
    "TrainConfig",
    "adam_step",
    "batches",
    "confusion_metrics",
    "cross_entropy",
    "decide",
    "evaluate",
    "load_checkpoint",
    "predict_proba",
    "sample_losses",
    "save_checkpoint",
    "train_loop",
    "write_history_csv",
]
