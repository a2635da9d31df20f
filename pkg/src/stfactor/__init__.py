"""Top-level package entrypoints for :mod:`stfactor`.

Importing exposes :func:`stfactor.main.main` so the console script can re-use it.
"""

from .main import main, run

__all__ = ["main", "run"]
