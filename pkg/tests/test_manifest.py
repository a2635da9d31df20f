from __future__ import annotations

import json

import pytest

from stfactor.errors import DataError, FormatError
from stfactor.manifest import MANIFEST_NAME, read_manifest, resolve, select_split, write_manifest
from stfactor.reports import SampleRecord


def record(sample_id: str, split: str = "train", label: int = 0) -> SampleRecord:
    return SampleRecord(id=sample_id, path=f"{split}/{sample_id}.stc", label=label, split=split, duration_s=0.64)


@pytest.fixture
def manifest_dir(tmp_path):
    records = [record("a"), record("b", label=1), record("c", split="val")]
    for r in records:
        (tmp_path / r.path).parent.mkdir(parents=True, exist_ok=True)
        (tmp_path / r.path).write_bytes(b"")
    write_manifest(tmp_path / MANIFEST_NAME, records)
    return tmp_path


class TestManifest:
    def test_round_trip(self, manifest_dir):
        records = read_manifest(manifest_dir)
        assert [r.id for r in records] == ["a", "b", "c"]
        assert records[1].label == 1

    def test_select_split(self, manifest_dir):
        records = read_manifest(manifest_dir / MANIFEST_NAME)
        assert [r.id for r in select_split(records, "train")] == ["a", "b"]
        assert select_split(records, "test") == []

    def test_unknown_split(self, manifest_dir):
        with pytest.raises(DataError):
            select_split(read_manifest(manifest_dir), "holdout")

    def test_resolve_relative_to_manifest(self, manifest_dir):
        target = resolve(manifest_dir / MANIFEST_NAME, record("a"))
        assert target == manifest_dir / "train" / "a.stc"

    def test_missing_file(self, manifest_dir):
        (manifest_dir / "val" / "c.stc").unlink()
        with pytest.raises(DataError):
            read_manifest(manifest_dir)
        assert len(read_manifest(manifest_dir, check_paths=False)) == 3

    def test_duplicate_id(self, manifest_dir):
        path = manifest_dir / MANIFEST_NAME
        path.write_text(path.read_text() + record("a").model_dump_json() + "\n")
        with pytest.raises(DataError):
            read_manifest(path)

    def test_invalid_label(self, manifest_dir):
        path = manifest_dir / MANIFEST_NAME
        bad = json.loads(record("d").model_dump_json()) | {"label": 2}
        path.write_text(json.dumps(bad) + "\n")
        with pytest.raises(FormatError):
            read_manifest(path, check_paths=False)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            read_manifest(tmp_path / "absent")
