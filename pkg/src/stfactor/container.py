"""Binary tensor container (``STC1``), also used as the checkpoint format.

Layout, all integers little-endian::

    b"STC1" | u32 entry_count | entries...
    entry := u16 name_len | utf-8 name | u8 dtype (0=f32, 1=f64) | u8 rank
             | u64 extents[rank] | row-major payload
"""

from __future__ import annotations

import logging
import math
import os
import struct
from collections.abc import Mapping
from pathlib import Path

import numpy as np

from .errors import FormatError

logger = logging.getLogger(__name__)

MAGIC = b"STC1"
_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}


def encode_container(entries: Mapping[str, np.ndarray]) -> bytes:
    """Serialize named tensors to container bytes."""
    chunks = [MAGIC, struct.pack("<I", len(entries))]
    for name, array in entries.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise FormatError(f"Entry name too long: {name[:32]}...")
        code = _DTYPE_CODES.get(array.dtype)
        if code is None:
            raise FormatError(f"Entry {name!r} has unsupported dtype {array.dtype}")
        if array.ndim < 1 or array.ndim > 255:
            raise FormatError(f"Entry {name!r} must have rank 1..255, got {array.ndim}")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<BB", code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=_CODE_DTYPES[code]).tobytes())
    return b"".join(chunks)


def decode_container(blob: bytes) -> dict[str, np.ndarray]:
    """Parse container bytes, validating magic, bounds and payload lengths.

    :raises FormatError: On bad magic, truncation, duplicate names or trailing bytes.
    """
    view = memoryview(blob)
    offset = 0

    def take(size: int, what: str) -> memoryview:
        nonlocal offset
        if offset + size > len(view):
            raise FormatError(f"Truncated container while reading {what} at byte {offset}")
        chunk = view[offset:offset + size]
        offset += size
        return chunk

    if bytes(take(4, "magic")) != MAGIC:
        raise FormatError("Bad magic, not an STC1 container")
    (count,) = struct.unpack("<I", take(4, "entry count"))
    entries: dict[str, np.ndarray] = {}
    for index in range(count):
        (name_len,) = struct.unpack("<H", take(2, f"entry {index} name length"))
        try:
            name = bytes(take(name_len, f"entry {index} name")).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"Entry {index} name is not valid UTF-8") from exc
        if name in entries:
            raise FormatError(f"Duplicate entry name {name!r}")
        code, rank = struct.unpack("<BB", take(2, f"entry {name!r} header"))
        dtype = _CODE_DTYPES.get(code)
        if dtype is None:
            raise FormatError(f"Entry {name!r} has unknown dtype code {code}")
        if rank < 1:
            raise FormatError(f"Entry {name!r} has rank 0")
        shape = struct.unpack(f"<{rank}Q", take(8 * rank, f"entry {name!r} extents"))
        if any(extent < 1 for extent in shape):
            raise FormatError(f"Entry {name!r} has a zero extent {shape}")
        payload = take(math.prod(shape) * dtype.itemsize, f"entry {name!r} payload")
        entries[name] = np.frombuffer(payload, dtype=dtype).astype(dtype.newbyteorder("="), copy=True).reshape(shape)
    if offset != len(view):
        raise FormatError(f"{len(view) - offset} trailing bytes after the last entry")
    return entries


def write_container(path: str | Path, entries: Mapping[str, np.ndarray]) -> None:
    """Write a container atomically (temporary file, then rename)."""
    path = Path(path)
    blob = encode_container(entries)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)
    logger.debug("Wrote %d entries (%d bytes) to %s", len(entries), len(blob), path)


def read_container(path: str | Path) -> dict[str, np.ndarray]:
    """Read every entry of a container file."""
    path = Path(path)
    entries = decode_container(path.read_bytes())
    logger.debug("Read %d entries from %s", len(entries), path)
    return entries
