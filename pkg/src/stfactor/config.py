"""Configuration and settings helpers for stfactor."""

from __future__ import annotations

import logging
from functools import lru_cache
from pathlib import Path
from typing import Any, Literal

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Library and CLI configuration loaded from environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="STFACTOR_",
        env_file=(".env",),
        extra="ignore",
    )

    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR"] = "INFO"

    data_dir: Path = Field(default_factory=lambda: Path.cwd() / ".stfactor")
    checkpoint_subdir: str = "checkpoints"

    precision: Literal["float32", "float64"] = "float32"
    workers: int = Field(default=1, ge=1)

    learning_rate: float = 1e-4
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = Field(default=2, ge=1)

    dropout: float = Field(default=0.5, ge=0.0, lt=1.0)
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    lstm_hidden: int = 128

    video_shape: tuple[int, int, int] = (16, 64, 64)
    segment_count: int = 87
    window_ms: float = 75.0
    overlap_ms: float = 30.0
    frame_step: int = Field(default=2, ge=1)

    decision_threshold: float = 0.5
    gradcheck_eps: float = 1e-5
    gradcheck_tol: float = 1e-6
    gradcheck_atol: float = 1e-9

    @property
    def checkpoint_dir(self) -> Path:
        return self.data_dir / self.checkpoint_subdir

    def ensure_dirs(self) -> None:
        """Create the filesystem directories used for default artifact locations."""
        for label, path in {
            "data": self.data_dir,
            "checkpoints": self.checkpoint_dir,
        }.items():
            path.mkdir(parents=True, exist_ok=True)
            logger.debug("Ensured %s directory exists at %s", label, path)


@lru_cache
def get_settings() -> Settings:
    """Load and cache the :class:`Settings` instance."""
    settings = Settings()
    logger.debug("Settings loaded (precision=%s, data_dir=%s)", settings.precision, settings.data_dir)
    return settings


settings = get_settings()


def apply_settings_overrides(overrides: dict[str, Any]) -> None:
    """Mutate the global settings instance with values coming from CLI flags."""
    if not overrides:
        return
    for key, value in overrides.items():
        if not hasattr(settings, key):
            raise AttributeError(f"Unknown setting {key!r}")
        logger.debug("Overriding setting %s=%r", key, value)
        setattr(settings, key, value)
