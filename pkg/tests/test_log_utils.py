from __future__ import annotations

import io
import logging
import sys

import pytest

from stfactor.log_utils import _HANDLER_NAME, init_logging


@pytest.fixture
def console_handlers():
    root = logging.getLogger()
    level = root.level
    yield lambda: [h for h in root.handlers if h.get_name() == _HANDLER_NAME]
    for handler in [h for h in root.handlers if h.get_name() == _HANDLER_NAME]:
        root.removeHandler(handler)
    root.setLevel(level)


class TestInitLogging:
    def test_single_handler_on_reuse(self, console_handlers):
        init_logging("INFO")
        init_logging("DEBUG")
        (handler,) = console_handlers()
        assert handler.level == logging.DEBUG
        assert logging.getLogger().level == logging.DEBUG

    def test_reuse_follows_current_stderr(self, console_handlers, monkeypatch):
        init_logging("INFO")
        replacement = io.StringIO()
        monkeypatch.setattr(sys, "stderr", replacement)
        init_logging("INFO")
        (handler,) = console_handlers()
        assert handler.stream is replacement
        logging.getLogger("stfactor.test").info("rebound")
        assert "rebound" in replacement.getvalue()
