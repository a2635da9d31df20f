from __future__ import annotations

import pytest

from stfactor.config import Settings, apply_settings_overrides, settings


class TestSettings:
    def test_defaults(self):
        fresh = Settings(_env_file=None)
        assert fresh.precision == "float32"
        assert fresh.segment_count == 87
        assert (fresh.window_ms, fresh.overlap_ms) == (75.0, 30.0)
        assert fresh.decision_threshold == 0.5
        assert fresh.gradcheck_atol == 1e-9

    def test_environment_prefix(self, monkeypatch):
        monkeypatch.setenv("STFACTOR_BATCH_SIZE", "8")
        monkeypatch.setenv("STFACTOR_PRECISION", "float64")
        fresh = Settings(_env_file=None)
        assert fresh.batch_size == 8
        assert fresh.precision == "float64"

    def test_checkpoint_dir(self, tmp_path):
        fresh = Settings(_env_file=None, data_dir=tmp_path)
        fresh.ensure_dirs()
        assert fresh.checkpoint_dir == tmp_path / "checkpoints"
        assert fresh.checkpoint_dir.is_dir()

    def test_overrides(self, monkeypatch):
        monkeypatch.setattr(settings, "lstm_hidden", settings.lstm_hidden)
        apply_settings_overrides({"lstm_hidden": 16})
        assert settings.lstm_hidden == 16

    def test_unknown_override(self):
        with pytest.raises(AttributeError):
            apply_settings_overrides({"no_such_setting": 1})
