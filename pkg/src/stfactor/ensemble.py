"""Late fusion of per-model intoxicated-class probabilities.

Fused probability per sample is ``sum(w_i * p_i)`` with nonnegative weights
normalized to sum to one; a sample is classified intoxicated when the fused value is
strictly greater than the decision threshold (ties go to sober).
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from collections.abc import Sequence
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .errors import ArithmeticDomainError, DataError, FormatError, UsageError

logger = logging.getLogger(__name__)

PREDICTION_HEADER = ("sample_id", "p_intoxicated")
_WEIGHT_SUM_TOL = 1e-9


class FusionStrategy(str, Enum):
    average = "average"
    validation_accuracy = "validation-accuracy"
    explicit = "explicit"


class PredictionSet(BaseModel):
    """Probabilities of the intoxicated class produced by one model."""

    model_config = ConfigDict(frozen=True)

    model_id: str
    sample_ids: tuple[str, ...]
    probabilities: tuple[float, ...]

    @model_validator(mode="after")
    def _aligned(self) -> PredictionSet:
        if len(self.sample_ids) != len(self.probabilities):
            raise ValueError(f"{self.model_id}: {len(self.sample_ids)} ids but {len(self.probabilities)} probabilities")
        for value in self.probabilities:
            if not (0.0 <= value <= 1.0):
                raise ValueError(f"{self.model_id}: probability {value} outside [0, 1]")
        return self

    def __len__(self) -> int:
        return len(self.sample_ids)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probabilities, dtype=np.float64)

    def by_id(self) -> dict[str, float]:
        return dict(zip(self.sample_ids, self.probabilities))


class EnsembleSpec(BaseModel):
    """Normalized fusion weights and the strategy that produced them."""

    model_config = ConfigDict(frozen=True)

    weights: tuple[float, ...] = Field(min_length=1)
    strategy: FusionStrategy = FusionStrategy.explicit

    @field_validator("weights")
    @classmethod
    def _normalized(cls, weights: tuple[float, ...]) -> tuple[float, ...]:
        if any(w < 0 or not math.isfinite(w) for w in weights):
            raise ValueError(f"Weights must be finite and nonnegative, got {list(weights)}")
        if abs(math.fsum(weights) - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError(f"Weights must sum to 1, got {math.fsum(weights)!r}")
        return weights

    @classmethod
    def from_raw(cls, raw: Sequence[float], strategy: FusionStrategy = FusionStrategy.explicit) -> EnsembleSpec:
        """Normalize arbitrary nonnegative weights.

        :raises ArithmeticDomainError: When the weights sum to zero.
        """
        if any(w < 0 for w in raw):
            raise UsageError(f"Weights must be nonnegative, got {list(raw)}")
        total = math.fsum(raw)
        if total <= 0:
            raise ArithmeticDomainError("Fusion weights sum to zero")
        return cls(weights=tuple(w / total for w in raw), strategy=strategy)


def derive_weights(strategy: FusionStrategy | str, val_accuracies: Sequence[float] | None = None, m: int | None = None) -> EnsembleSpec:
    """Weights for ``average`` (``1/m`` each) or ``validation-accuracy`` (``acc_i / sum``).

    :param m: Model count; defaults to the number of accuracies.
    :raises UsageError: On a missing or out-of-range accuracy.
    :raises ArithmeticDomainError: When accuracies sum to zero.
    """
    strategy = FusionStrategy(strategy)
    if strategy is FusionStrategy.average:
        count = m if m is not None else len(val_accuracies or ())
        if count < 1:
            raise UsageError("Average fusion needs at least one model")
        return EnsembleSpec(weights=(1.0 / count,) * count, strategy=strategy)
    if strategy is FusionStrategy.explicit:
        raise UsageError("Explicit weights are built with EnsembleSpec.from_raw")
    if not val_accuracies:
        raise UsageError("Validation-accuracy fusion needs one accuracy per model")
    if m is not None and m != len(val_accuracies):
        raise UsageError(f"Expected {m} accuracies, got {len(val_accuracies)}")
    if all(acc == 0 for acc in val_accuracies):
        raise ArithmeticDomainError("Validation accuracies sum to zero; weights undefined")
    for acc in val_accuracies:
        if not 0.0 < acc <= 1.0:
            raise UsageError(f"Validation accuracy {acc} outside (0, 1]")
    total = math.fsum(val_accuracies)
    return EnsembleSpec(weights=tuple(acc / total for acc in val_accuracies), strategy=strategy)


def align(predictions: Sequence[PredictionSet]) -> list[str]:
    """Sample ids shared by every prediction set, in the order of the first.

    :raises DataError: When the sets do not cover the same ids.
    """
    reference = predictions[0]
    counts = Counter(reference.sample_ids)
    if any(n > 1 for n in counts.values()):
        raise DataError(f"{reference.model_id}: duplicate sample ids")
    for other in predictions[1:]:
        if Counter(other.sample_ids) != counts:
            missing = sorted(set(reference.sample_ids) ^ set(other.sample_ids))[:5]
            raise DataError(f"{other.model_id} and {reference.model_id} cover different samples (e.g. {missing})")
    return list(reference.sample_ids)


def fuse(predictions: Sequence[PredictionSet], spec: EnsembleSpec, model_id: str = "ensemble") -> PredictionSet:
    """Weighted sum of aligned probabilities.

    :raises UsageError: When there are no predictions or the weight count differs.
    :raises DataError: When sample ids do not match across models.
    """
    if not predictions:
        raise UsageError("Fusion needs at least one prediction set")
    if len(spec.weights) != len(predictions):
        raise UsageError(f"{len(spec.weights)} weights for {len(predictions)} prediction sets")
    ids = align(predictions)
    lookups = [p.by_id() for p in predictions]
    stacked = np.array([[lookup[i] for i in ids] for lookup in lookups], dtype=np.float64)
    fused = np.clip(np.asarray(spec.weights) @ stacked, 0.0, 1.0)
    logger.debug("Fused %d models over %d samples", len(predictions), len(ids))
    return PredictionSet(model_id=model_id, sample_ids=tuple(ids), probabilities=tuple(float(v) for v in fused))


def write_predictions(path: str | Path, predictions: PredictionSet) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(PREDICTION_HEADER)
        for sample_id, p in zip(predictions.sample_ids, predictions.probabilities):
            writer.writerow([sample_id, repr(p)])
    logger.info("Wrote %d predictions to %s", len(predictions), path)


def read_predictions(path: str | Path, model_id: str | None = None) -> PredictionSet:
    """Load a ``sample_id,p_intoxicated`` CSV.

    :raises FormatError: On a bad header, a malformed row or an out-of-range value.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != PREDICTION_HEADER:
            raise FormatError(f"{path}: expected header {','.join(PREDICTION_HEADER)}")
        ids, probs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise FormatError(f"{path}:{lineno}: expected 2 columns, got {len(row)}")
            try:
                value = float(row[1])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {row[1]!r} is not a number") from exc
            if not 0.0 <= value <= 1.0:
                raise FormatError(f"{path}:{lineno}: probability {value} outside [0, 1]")
            ids.append(row[0])
            probs.append(value)
    return PredictionSet(model_id=model_id or path.stem, sample_ids=tuple(ids), probabilities=tuple(probs))
