"""Shared fixtures for the stfactor test-suite."""

from __future__ import annotations

from collections.abc import Iterator
from pathlib import Path

import numpy as np
import pytest

from stfactor.config import settings
from stfactor.synthetic import generate_dataset
from stfactor.tensor import Rng, precision


@pytest.fixture
def rng() -> Rng:
    return Rng(1234)


@pytest.fixture
def f64() -> Iterator[None]:
    """Run the test body in 64-bit mode."""
    with precision("float64"):
        yield


@pytest.fixture
def np_rng() -> np.random.Generator:
    return np.random.default_rng(7)


@pytest.fixture(autouse=True)
def _isolated_data_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr(settings, "data_dir", tmp_path / ".stfactor")
    monkeypatch.setattr(settings, "workers", 1)


@pytest.fixture
def tiny_video_dir(tmp_path: Path) -> Path:
    out = tmp_path / "video"
    generate_dataset("video", out, {"train": 6, "val": 4, "test": 4}, seed=3, shape=(4, 8, 8))
    return out


@pytest.fixture
def tiny_audio_dir(tmp_path: Path) -> Path:
    out = tmp_path / "audio"
    generate_dataset("audio", out, {"train": 6, "val": 4, "test": 4}, seed=5, feat_dim=3, duration_range=(4.0, 5.0))
    return out


@pytest.fixture
def tiny_features_dir(tmp_path: Path) -> Path:
    out = tmp_path / "features"
    generate_dataset("features", out, {"train": 6, "val": 4, "test": 4}, seed=9, feat_dim=5, steps=8)
    return out
