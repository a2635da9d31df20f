"""Typed records written to JSON, JSON-lines and CSV outputs."""

from __future__ import annotations

import json
from typing import Literal

from pydantic import BaseModel, Field


def dumps_sorted(model: BaseModel) -> str:
    """Serialize with sorted keys so outputs diff cleanly."""
    return json.dumps(model.model_dump(mode="json"), sort_keys=True)


class BlockParamEntry(BaseModel):
    index: int
    kind: str
    cin: int
    cout: int
    weights: int
    biases: int
    flops: int | None = None


class ParamReport(BaseModel):
    name: str
    per_block: list[BlockParamEntry]
    total_weights: int
    total_biases: int
    decrease_factor: float
    flops: int | None = None


class OracleReport(BaseModel):
    case_id: str
    max_abs_diff: float
    max_rel_err: float
    tolerance: float
    passed: bool
    seed: int | None = None
    detail: str | None = None


class Metrics(BaseModel):
    accuracy: float = Field(ge=0.0, le=1.0)
    precision: float = Field(ge=0.0, le=1.0)
    recall: float = Field(ge=0.0, le=1.0)
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


class HistoryRow(BaseModel):
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    arch: str


class SampleRecord(BaseModel):
    """One manifest line."""

    id: str
    path: str
    label: Literal[0, 1]
    split: Literal["train", "val", "test"]
    duration_s: float = Field(ge=0.0)


class TrainResult(BaseModel):
    arch: str
    best_epoch: int
    best_val_acc: float
    checkpoint: str
    history: list[HistoryRow]
