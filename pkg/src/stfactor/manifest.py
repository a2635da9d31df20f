"""JSON-lines sample manifests: ``{id, path, label, split, duration_s}`` per line."""

from __future__ import annotations

import logging
from collections.abc import Iterable
from pathlib import Path

from pydantic import ValidationError

from .errors import DataError, FormatError
from .reports import SampleRecord

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
SPLITS = ("train", "val", "test")


def write_manifest(path: str | Path, records: Iterable[SampleRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [record.model_dump_json() for record in records]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote manifest with %d samples to %s", len(lines), path)


def read_manifest(path: str | Path, check_paths: bool = True) -> list[SampleRecord]:
    """Load and validate a manifest.

    Sample paths are resolved relative to the manifest directory.

    :raises FormatError: On a malformed line.
    :raises DataError: On duplicate ids or (with ``check_paths``) missing files.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"Manifest {path} does not exist")
    records: list[SampleRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = SampleRecord.model_validate_json(line)
        except ValidationError as exc:
            raise FormatError(f"{path}:{lineno}: invalid manifest record: {exc.errors()[0]['msg']}") from exc
        if record.id in seen:
            raise DataError(f"{path}:{lineno}: duplicate sample id {record.id!r}")
        seen.add(record.id)
        if check_paths and not (path.parent / record.path).exists():
            raise DataError(f"{path}:{lineno}: sample file {record.path} does not exist")
        records.append(record)
    logger.debug("Loaded %d manifest records from %s", len(records), path)
    return records


def resolve(manifest_path: str | Path, record: SampleRecord) -> Path:
    manifest_path = Path(manifest_path)
    base = manifest_path if manifest_path.is_dir() else manifest_path.parent
    return base / record.path


def select_split(records: Iterable[SampleRecord], split: str) -> list[SampleRecord]:
    if split not in SPLITS:
        raise DataError(f"Unknown split {split!r}; expected one of {', '.join(SPLITS)}")
    return [record for record in records if record.split == split]
