from __future__ import annotations

import struct

import numpy as np
import pytest

from stfactor.container import MAGIC, decode_container, encode_container, read_container, write_container
from stfactor.errors import FormatError


class TestEncoding:
    def test_byte_layout(self):
        blob = encode_container({"a": np.array([1.0], dtype=np.float32)})
        expected = (
            MAGIC
            + struct.pack("<I", 1)
            + struct.pack("<H", 1)
            + b"a"
            + bytes([0, 1])
            + struct.pack("<Q", 1)
            + struct.pack("<f", 1.0)
        )
        assert blob == expected

    def test_preserves_order_dtype_and_shape(self):
        entries = {
            "blocks.0.conv.weight": np.arange(24, dtype=np.float32).reshape(2, 3, 4),
            "meta.val_acc": np.array([0.625]),
        }
        decoded = decode_container(encode_container(entries))
        assert list(decoded) == list(entries)
        assert decoded["blocks.0.conv.weight"].dtype == np.float32
        assert decoded["meta.val_acc"].dtype == np.float64
        assert np.array_equal(decoded["blocks.0.conv.weight"], entries["blocks.0.conv.weight"])

    def test_decoded_arrays_are_writable(self):
        decoded = decode_container(encode_container({"w": np.zeros(3)}))
        decoded["w"] += 1.0
        assert decoded["w"].tolist() == [1.0, 1.0, 1.0]

    def test_rejects_integer_dtype(self):
        with pytest.raises(FormatError):
            encode_container({"i": np.arange(3)})

    def test_rejects_scalars(self):
        with pytest.raises(FormatError):
            encode_container({"s": np.float64(1.0).reshape(())})


class TestDecodingErrors:
    @pytest.fixture
    def blob(self) -> bytes:
        return encode_container({"x": np.ones((2, 2))})

    def test_bad_magic(self, blob):
        with pytest.raises(FormatError):
            decode_container(b"STC2" + blob[4:])

    def test_truncated(self, blob):
        with pytest.raises(FormatError):
            decode_container(blob[:-1])

    def test_trailing_bytes(self, blob):
        with pytest.raises(FormatError):
            decode_container(blob + b"\x00")

    def test_duplicate_names(self, blob):
        entry = blob[8:]
        with pytest.raises(FormatError):
            decode_container(MAGIC + struct.pack("<I", 2) + entry + entry)

    def test_unknown_dtype_code(self, blob):
        corrupted = bytearray(blob)
        corrupted[8 + 2 + 1] = 7
        with pytest.raises(FormatError):
            decode_container(bytes(corrupted))

    def test_zero_extent(self):
        blob = MAGIC + struct.pack("<I", 1) + struct.pack("<H", 1) + b"z" + bytes([1, 1]) + struct.pack("<Q", 0)
        with pytest.raises(FormatError):
            decode_container(blob)


class TestFiles:
    def test_write_then_read(self, tmp_path):
        path = tmp_path / "nested" / "weights.stc"
        write_container(path, {"w": np.full((2, 3), 0.1, dtype=np.float32)})
        assert not path.with_name("weights.stc.tmp").exists()
        assert read_container(path)["w"].shape == (2, 3)
