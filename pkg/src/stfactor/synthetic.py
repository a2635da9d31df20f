"""Seeded synthetic audio-visual datasets with known separable structure.

Video samples contain a Gaussian blob drifting over a torus with a flickering
amplitude: sober samples (label 0) drift slowly and flicker at a low frequency,
intoxicated samples (label 1) drift fast and flicker at a high frequency. Every
frame of every channel is shifted to zero mean so no single frame's brightness gives
the label away.

Audio samples are 100 Hz frame-level feature streams whose channels oscillate at a
class-dependent frequency with class-dependent amplitude and offset. Feature samples
are ``[T, D]`` sequences driven by a latent oscillation projected through a fixed
random basis.

Each sample is seeded from ``(seed, split, index)`` alone, so outputs do not depend on
the number of worker processes.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from .audio import AudioFeatureStream, write_audio_csv
from .config import settings
from .container import write_container
from .errors import UsageError
from .manifest import MANIFEST_NAME, SPLITS, write_manifest
from .reports import SampleRecord
from .tensor import Rng

logger = logging.getLogger(__name__)

VIDEO_FPS = 25.0
AUDIO_FRAME_S = 0.01
FEATURE_FPS = 25.0
MIN_AUDIO_DURATION_S = 4.0
# 75 ms window + 86 hops of 45 ms
FIXED_MODE_MIN_S = 3.945
DEFAULT_AUDIO_DURATION = (MIN_AUDIO_DURATION_S, 10.0)
# 1045 sober / 3495 intoxicated training clips in the source corpus
SOURCE_IMBALANCE = 3495 / 1045


class SynthKind(str, Enum):
    video = "video"
    audio = "audio"
    features = "features"


class SampleJob(BaseModel):
    """Everything a worker process needs to render one sample."""

    model_config = ConfigDict(frozen=True)

    kind: SynthKind
    out_dir: Path
    sample_id: str
    split: str
    label: int
    seed: int
    shape: tuple[int, int, int] = (16, 64, 64)
    feat_dim: int = 16
    steps: int = 32
    duration_range: tuple[float, float] = DEFAULT_AUDIO_DURATION


def sample_seed(seed: int, split: str, index: int) -> int:
    """Seed of one sample, derived from the run seed and its position only."""
    return Rng(seed * 1_000_003 + SPLITS.index(split) * 65_537 + index).next_u64()


def split_labels(rng: Rng, count: int, imbalance: float) -> list[int]:
    """Shuffled labels with ``intoxicated / sober ~= imbalance`` (both present when count >= 2)."""
    if imbalance <= 0:
        raise UsageError(f"Imbalance ratio must be positive, got {imbalance}")
    positives = round(count * imbalance / (1.0 + imbalance))
    if count >= 2:
        positives = min(max(positives, 1), count - 1)
    labels = [1] * positives + [0] * (count - positives)
    return [labels[i] for i in rng.permutation(count)]


def render_video(rng: Rng, label: int, shape: tuple[int, int, int]) -> np.ndarray:
    """One ``[3, L, H, W]`` float32 clip."""
    length, height, width = shape
    scale = min(height, width) / 64.0
    speed = (0.3 + 0.5 * rng.next_float() if label == 0 else 2.0 + 1.0 * rng.next_float()) * max(scale, 0.25)
    angle = 2.0 * math.pi * rng.next_float()
    freq = 0.04 + 0.04 * rng.next_float() if label == 0 else 0.3 + 0.15 * rng.next_float()
    phase = 2.0 * math.pi * rng.next_float()
    radius = max(1.0, min(height, width) * (0.12 + 0.06 * rng.next_float()))
    cy, cx = height * rng.next_float(), width * rng.next_float()
    color = 0.5 + 0.5 * rng.uniform(3)
    noise = np.random.default_rng(rng.next_u64())

    yy, xx = np.meshgrid(np.arange(height, dtype=np.float64), np.arange(width, dtype=np.float64), indexing="ij")
    clip = np.empty((3, length, height, width), dtype=np.float64)
    for t in range(length):
        py = cy + speed * math.sin(angle) * t
        px = cx + speed * math.cos(angle) * t
        dy = (yy - py + height / 2) % height - height / 2
        dx = (xx - px + width / 2) % width - width / 2
        blob = np.exp(-(dy ** 2 + dx ** 2) / (2.0 * radius ** 2))
        amplitude = 1.0 + 0.6 * math.sin(2.0 * math.pi * freq * t + phase)
        clip[:, t] = color[:, None, None] * amplitude * blob
    clip += 0.1 * noise.standard_normal(clip.shape)
    clip -= clip.mean(axis=(2, 3), keepdims=True)
    return clip.astype(np.float32)


def render_audio(rng: Rng, label: int, feat_dim: int, duration_range: tuple[float, float]) -> AudioFeatureStream:
    """Frame-level feature stream sampled every 10 ms."""
    lo, hi = duration_range
    duration = lo + (hi - lo) * rng.next_float()
    frames = int(round(duration / AUDIO_FRAME_S))
    duration = frames * AUDIO_FRAME_S
    times = np.arange(frames, dtype=np.float64) * AUDIO_FRAME_S
    base_freq = 1.5 if label == 0 else 4.0
    freq = base_freq * (0.9 + 0.2 * rng.next_float())
    amplitude = 1.0 if label == 0 else 1.6
    phases = 2.0 * math.pi * rng.uniform(feat_dim)
    offsets = np.zeros(feat_dim)
    if label == 1:
        offsets[::2] = 0.5
    noise = np.random.default_rng(rng.next_u64())
    features = offsets + amplitude * np.sin(2.0 * math.pi * freq * times[:, None] + phases[None, :])
    features += 0.3 * noise.standard_normal(features.shape)
    return AudioFeatureStream(times, features, duration)


def render_features(rng: Rng, label: int, steps: int, feat_dim: int) -> np.ndarray:
    """``[T, D]`` per-frame feature sequence."""
    basis = np.random.default_rng(0x5F3759DF).standard_normal((2, feat_dim)) / math.sqrt(feat_dim)
    freq = (0.03 if label == 0 else 0.2) * (0.9 + 0.2 * rng.next_float())
    phase = 2.0 * math.pi * rng.next_float()
    t = np.arange(steps, dtype=np.float64)
    latent = np.stack([np.sin(2 * math.pi * freq * t + phase), np.cos(2 * math.pi * freq * t + phase)], axis=1)
    noise = np.random.default_rng(rng.next_u64())
    sequence = 3.0 * latent @ basis + 0.2 * noise.standard_normal((steps, feat_dim))
    return sequence.astype(np.float32)


def generate_sample(job: SampleJob) -> SampleRecord:
    """Render and write one sample; runs inside worker processes."""
    rng = Rng(job.seed)
    if job.kind is SynthKind.video:
        path = Path(job.split) / f"{job.sample_id}.stc"
        write_container(job.out_dir / path, {"video": render_video(rng, job.label, job.shape)})
        duration = job.shape[0] / VIDEO_FPS
    elif job.kind is SynthKind.audio:
        path = Path(job.split) / f"{job.sample_id}.csv"
        stream = render_audio(rng, job.label, job.feat_dim, job.duration_range)
        write_audio_csv(job.out_dir / path, stream)
        duration = stream.duration_s
    else:
        path = Path(job.split) / f"{job.sample_id}.stc"
        write_container(job.out_dir / path, {"features": render_features(rng, job.label, job.steps, job.feat_dim)})
        duration = job.steps / FEATURE_FPS
    return SampleRecord(id=job.sample_id, path=path.as_posix(), label=job.label, split=job.split, duration_s=duration)


def plan_jobs(
    kind: SynthKind,
    out_dir: Path,
    counts: dict[str, int],
    seed: int,
    imbalance: float = 1.0,
    **options,
) -> list[SampleJob]:
    """Assign ids, labels and per-sample seeds for every split."""
    jobs = []
    for split in SPLITS:
        count = counts.get(split, 0)
        if count < 1:
            raise UsageError(f"Split {split!r} needs at least one sample")
        labels = split_labels(Rng(sample_seed(seed, split, -1)), count, imbalance)
        for index, label in enumerate(labels):
            jobs.append(
                SampleJob(
                    kind=kind,
                    out_dir=out_dir,
                    sample_id=f"{split}-{index:05d}",
                    split=split,
                    label=label,
                    seed=sample_seed(seed, split, index),
                    **options,
                )
            )
    return jobs


def generate_dataset(
    kind: SynthKind | str,
    out_dir: str | Path,
    counts: dict[str, int],
    seed: int,
    *,
    imbalance: float = 1.0,
    shape: tuple[int, int, int] | None = None,
    feat_dim: int = 16,
    steps: int = 32,
    duration_range: tuple[float, float] = DEFAULT_AUDIO_DURATION,
    workers: int | None = None,
) -> list[SampleRecord]:
    """Generate every split of a synthetic dataset plus its manifest.

    :param kind: ``video``, ``audio`` or ``features``.
    :param out_dir: Output directory; receives ``manifest.jsonl`` and one folder per split.
    :param counts: Sample count per split (``train``, ``val``, ``test``).
    :param seed: Run seed; regenerating with the same seed is byte-identical.
    :param imbalance: Intoxicated-to-sober ratio per split.
    :param workers: Process-pool size, defaults to ``settings.workers``.
    """
    kind = SynthKind(kind)
    out_dir = Path(out_dir)
    if duration_range[0] < FIXED_MODE_MIN_S:
        raise UsageError("Audio durations must leave room for 87 fixed windows (>= 3.945 s)")
    jobs = plan_jobs(
        kind,
        out_dir,
        counts,
        seed,
        imbalance,
        shape=shape or settings.video_shape,
        feat_dim=feat_dim,
        steps=steps,
        duration_range=duration_range,
    )
    workers = workers or settings.workers
    logger.info("Generating %d %s samples into %s with %d worker(s)", len(jobs), kind.value, out_dir, workers)
    if workers <= 1:
        records = [generate_sample(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(generate_sample, jobs, chunksize=4))
    write_manifest(out_dir / MANIFEST_NAME, records)
    return records
