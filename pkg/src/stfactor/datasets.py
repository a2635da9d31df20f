"""Load manifest splits into the array layout each model family consumes."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import SegmentationMode, SegmentationSpec, pooled_features, read_audio_csv, segment
from .config import settings
from .container import read_container
from .errors import DataError, UsageError
from .manifest import read_manifest, resolve, select_split
from .models import InputKind
from .reports import SampleRecord
from .tensor import NDTensor, get_dtype

logger = logging.getLogger(__name__)


@dataclass
class SplitData:
    """Stacked inputs, integer labels and sample ids of one split."""

    ids: list[str]
    x: NDTensor
    y: np.ndarray

    def __len__(self) -> int:
        return len(self.ids)

    def take(self, indices: list[int] | np.ndarray) -> SplitData:
        indices = np.asarray(indices, dtype=np.int64)
        return SplitData([self.ids[i] for i in indices], self.x[indices], self.y[indices])


def _load_entry(path: Path, entry: str) -> np.ndarray:
    entries = read_container(path)
    if entry not in entries:
        raise DataError(f"{path} has no {entry!r} entry")
    return entries[entry]


def load_sample(manifest_dir: Path, record: SampleRecord, kind: InputKind, frame_step: int) -> np.ndarray:
    path = resolve(manifest_dir, record)
    if kind is InputKind.video:
        return _load_entry(path, "video")
    if kind is InputKind.frame_features:
        return _load_entry(path, "features")[::frame_step]
    stream = read_audio_csv(path, duration_s=record.duration_s or None)
    if kind is InputKind.pooled_audio:
        return pooled_features(stream)
    mode = SegmentationMode.fixed if kind is InputKind.fixed_segments else SegmentationMode.variable
    return segment(stream, SegmentationSpec(mode=mode))


def load_split(
    data_dir: str | Path,
    split: str,
    kind: InputKind,
    frame_step: int | None = None,
) -> SplitData:
    """Read every sample of ``split`` and stack them.

    :param data_dir: Directory holding ``manifest.jsonl`` (or the manifest path).
    :param kind: Input layout required by the model.
    :param frame_step: Keep every ``frame_step``-th frame of feature sequences.
    :raises UsageError: When the split is empty.
    :raises DataError: When samples disagree in shape.
    """
    data_dir = Path(data_dir)
    manifest_dir = data_dir if data_dir.is_dir() else data_dir.parent
    records = select_split(read_manifest(data_dir), split)
    if not records:
        raise UsageError(f"Split {split!r} in {data_dir} is empty")
    step = frame_step or settings.frame_step
    samples = [load_sample(manifest_dir, record, kind, step) for record in records]
    shapes = {sample.shape for sample in samples}
    if len(shapes) != 1:
        raise DataError(f"Samples of split {split!r} have differing shapes: {sorted(shapes)}")
    x = np.stack(samples).astype(get_dtype())
    y = np.array([record.label for record in records], dtype=np.int64)
    logger.info("Loaded %s split: %d samples, input shape %s", split, len(records), x.shape[1:])
    return SplitData([record.id for record in records], x, y)
