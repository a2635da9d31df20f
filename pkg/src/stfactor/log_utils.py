import logging
import sys

_HANDLER_NAME = "stfactor-console"


def init_logging(level: str | int = logging.INFO) -> None:
    """Initialize logging configuration for the command-line tool.

    Calling it again reuses the console handler and rebinds it to the current
    ``sys.stderr``.
    """

    root_logger = logging.getLogger()
    root_logger.setLevel(level)
    for handler in root_logger.handlers:
        if handler.get_name() == _HANDLER_NAME:
            handler.setLevel(level)
            if isinstance(handler, logging.StreamHandler):
                handler.setStream(sys.stderr)
            return
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.set_name(_HANDLER_NAME)
    console_handler.setLevel(level)
    formatter = logging.Formatter('%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    console_handler.setFormatter(formatter)
    root_logger.addHandler(console_handler)
