"""Frame-level audio feature streams and their windowing into LSTM steps.

A stream is a CSV whose first column ``t_sec`` holds strictly increasing frame
timestamps and whose remaining ``F`` columns hold precomputed frame features. Both
segmentation modes mean-pool the frames falling inside each window and always return
exactly ``segment_count`` (87) steps or raise.
"""

from __future__ import annotations

import csv
import logging
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import settings
from .errors import DataError, FormatError
from .tensor import NDTensor, get_dtype

logger = logging.getLogger(__name__)

TIME_COLUMN = "t_sec"


class SegmentationMode(str, Enum):
    fixed = "fixed"
    variable = "variable"


class SegmentationSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: SegmentationMode = SegmentationMode.fixed
    window_ms: float = Field(default_factory=lambda: settings.window_ms, gt=0)
    overlap_ms: float = Field(default_factory=lambda: settings.overlap_ms, ge=0)
    segment_count: int = Field(default_factory=lambda: settings.segment_count, ge=1)

    @model_validator(mode="after")
    def _window_exceeds_overlap(self) -> SegmentationSpec:
        if self.window_ms <= self.overlap_ms:
            raise ValueError("window_ms must exceed overlap_ms")
        return self

    @property
    def hop_ms(self) -> float:
        return self.window_ms - self.overlap_ms

    @property
    def min_duration_ms(self) -> float:
        """Shortest stream the fixed mode accepts: ``window + (count - 1) * hop``."""
        return self.window_ms + (self.segment_count - 1) * self.hop_ms


class AudioFeatureStream:
    """Timestamps ``[R]`` in seconds, features ``[R, F]`` and the stream duration."""

    def __init__(self, times: np.ndarray, features: np.ndarray, duration_s: float | None = None) -> None:
        times = np.asarray(times, dtype=np.float64)
        features = np.asarray(features, dtype=np.float64)
        if times.ndim != 1 or features.ndim != 2 or features.shape[0] != times.shape[0]:
            raise DataError(f"Stream needs times [R] and features [R, F], got {times.shape} and {features.shape}")
        if times.size == 0:
            raise DataError("Stream has no frames")
        if np.any(np.diff(times) <= 0):
            raise DataError("Stream timestamps must be strictly increasing")
        self.times = times
        self.features = features
        if duration_s is None:
            step = float(np.median(np.diff(times))) if times.size > 1 else 0.0
            duration_s = float(times[-1]) + step
        self.duration_s = float(duration_s)

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def times_ms(self) -> np.ndarray:
        return np.round(self.times * 1000.0, 6)


def read_audio_csv(path: str | Path, duration_s: float | None = None) -> AudioFeatureStream:
    """Load a stream CSV.

    :raises FormatError: On a bad header or ragged/non-numeric rows.
    :raises DataError: On non-increasing timestamps.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as handle:
        header = next(csv.reader(handle), None)
    if not header or header[0].strip() != TIME_COLUMN or len(header) < 2:
        raise FormatError(f"{path}: header must start with {TIME_COLUMN!r} followed by feature columns")
    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if table.shape[1] != len(header):
        raise FormatError(f"{path}: rows have {table.shape[1]} columns, header has {len(header)}")
    return AudioFeatureStream(table[:, 0], table[:, 1:], duration_s)


def write_audio_csv(path: str | Path, stream: AudioFeatureStream) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = ",".join([TIME_COLUMN, *(f"f{i}" for i in range(stream.feature_dim))])
    table = np.column_stack([stream.times, stream.features])
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt="%.9g")


def _pool_windows(stream: AudioFeatureStream, starts_ms: np.ndarray, ends_ms: np.ndarray) -> NDTensor:
    times = stream.times_ms
    lo = np.searchsorted(times, starts_ms, side="left")
    hi = np.searchsorted(times, ends_ms, side="left")
    empty = np.flatnonzero(hi <= lo)
    if empty.size:
        k = int(empty[0])
        raise DataError(f"Window {k} [{starts_ms[k]:.3f}, {ends_ms[k]:.3f}) ms contains no frames")
    pooled = np.stack([stream.features[a:b].mean(axis=0) for a, b in zip(lo, hi)])
    return pooled.astype(get_dtype())


def fixed_segments(stream: AudioFeatureStream, spec: SegmentationSpec | None = None) -> NDTensor:
    """Windows of ``window_ms`` every ``hop_ms`` from the stream start, mean-pooled.

    :raises DataError: When the stream is shorter than ``spec.min_duration_ms`` or a
        window holds no frame.
    """
    spec = spec or SegmentationSpec(mode=SegmentationMode.fixed)
    duration_ms = round(stream.duration_s * 1000.0, 6)
    if duration_ms < spec.min_duration_ms:
        raise DataError(
            f"Stream lasts {duration_ms:.1f} ms; fixed segmentation needs at least "
            f"{spec.min_duration_ms:g} ms ({spec.segment_count} windows of {spec.window_ms:g} ms, hop {spec.hop_ms:g} ms)"
        )
    starts = np.arange(spec.segment_count, dtype=np.float64) * spec.hop_ms
    return _pool_windows(stream, starts, starts + spec.window_ms)


def variable_segments(stream: AudioFeatureStream, spec: SegmentationSpec | None = None) -> NDTensor:
    """``segment_count`` equal contiguous windows spanning the whole duration.

    :raises DataError: With fewer frames than segments, a non-positive duration or an
        empty window.
    """
    spec = spec or SegmentationSpec(mode=SegmentationMode.variable)
    if stream.duration_s <= 0:
        raise DataError("Stream duration must be positive")
    if stream.times.size < spec.segment_count:
        raise DataError(f"Stream has {stream.times.size} frames; variable segmentation needs {spec.segment_count}")
    duration_ms = stream.duration_s * 1000.0
    edges = np.round(np.arange(spec.segment_count + 1, dtype=np.float64) * duration_ms / spec.segment_count, 6)
    return _pool_windows(stream, edges[:-1], edges[1:])


def segment(stream: AudioFeatureStream, spec: SegmentationSpec) -> NDTensor:
    if spec.mode is SegmentationMode.fixed:
        return fixed_segments(stream, spec)
    return variable_segments(stream, spec)


def pooled_features(stream: AudioFeatureStream) -> NDTensor:
    """Stream-level mean and standard deviation of every feature (``2F`` values)."""
    return np.concatenate([stream.features.mean(axis=0), stream.features.std(axis=0)]).astype(get_dtype())
