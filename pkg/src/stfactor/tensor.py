"""Dense n-dimensional arrays, precision mode and the deterministic random stream.

Tensors are plain C-contiguous :class:`numpy.ndarray` objects. This module owns the
element type used across the library (32-bit by default, 64-bit in high-precision
mode for gradient checks) and the seeded :class:`Rng` every initializer draws from.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterator, Sequence
from contextlib import contextmanager
from typing import Literal

import numpy as np
import numpy.typing as npt

from .config import settings
from .errors import RangeError, ShapeError

logger = logging.getLogger(__name__)

NDTensor = npt.NDArray[np.floating]
Precision = Literal["float32", "float64"]

_MASK64 = (1 << 64) - 1
_DTYPES: dict[str, type[np.floating]] = {"float32": np.float32, "float64": np.float64}
_precision: Precision = settings.precision


def get_dtype() -> type[np.floating]:
    """Return the element type new tensors are created with."""
    return _DTYPES[_precision]


def set_precision(mode: Precision) -> None:
    """Switch the build-wide element type."""
    global _precision
    if mode not in _DTYPES:
        raise RangeError(f"Unknown precision mode {mode!r}")
    logger.debug("Precision mode set to %s", mode)
    _precision = mode


@contextmanager
def precision(mode: Precision) -> Iterator[None]:
    """Temporarily run with another element type (``float64`` for gradient checks)."""
    previous = _precision
    set_precision(mode)
    try:
        yield
    finally:
        set_precision(previous)


def check_shape(shape: Sequence[int]) -> tuple[int, ...]:
    """Validate an extent list and return it as a tuple.

    :raises ShapeError: On an empty list or any extent below 1.
    """
    dims = tuple(int(d) for d in shape)
    if not dims:
        raise ShapeError("Tensor rank must be at least 1")
    if any(d < 1 for d in dims):
        raise ShapeError(f"All extents must be >= 1, got {list(dims)}")
    return dims


def _rotl(value: int, shift: int) -> int:
    return ((value << shift) | (value >> (64 - shift))) & _MASK64


class Rng:
    """xoshiro256** generator whose 256-bit state is expanded from a seed by splitmix64.

    The stream depends only on the seed, so two instances built from the same seed
    yield identical values on every platform.
    """

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)
        state = self.seed & _MASK64
        words = []
        for _ in range(4):
            state = (state + 0x9E3779B97F4A7C15) & _MASK64
            z = state
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
            words.append(z ^ (z >> 31))
        self._s = words

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def next_float(self) -> float:
        """Return a double in ``[0, 1)`` built from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, count: int) -> npt.NDArray[np.float64]:
        """Return ``count`` doubles in ``[0, 1)`` in stream order."""
        scale = 1.0 / (1 << 53)
        nxt = self.next_u64
        return np.fromiter(((nxt() >> 11) * scale for _ in range(count)), dtype=np.float64, count=count)

    def normal(self, count: int) -> npt.NDArray[np.float64]:
        """Standard normal samples via the Box-Muller transform."""
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = 2.0 * math.pi * u[1::2]
        out = np.empty(2 * pairs, dtype=np.float64)
        out[0::2] = radius * np.cos(theta)
        out[1::2] = radius * np.sin(theta)
        return out[:count]

    def below(self, bound: int) -> int:
        """Integer in ``[0, bound)``."""
        return min(int(self.next_float() * bound), bound - 1)

    def permutation(self, count: int) -> list[int]:
        """Fisher-Yates shuffle of ``range(count)``."""
        order = list(range(count))
        for i in range(count - 1, 0, -1):
            j = self.below(i + 1)
            order[i], order[j] = order[j], order[i]
        return order

    def spawn(self) -> Rng:
        """Derive an independent generator seeded from this stream."""
        return Rng(self.next_u64())


def tensor_new(shape: Sequence[int], fill: float = 0.0) -> NDTensor:
    """Allocate a tensor of ``shape`` where every element equals ``fill``."""
    return np.full(check_shape(shape), fill, dtype=get_dtype())


def tensor_rand_uniform(rng: Rng, shape: Sequence[int], lo: float, hi: float) -> NDTensor:
    """Fill a tensor with uniform draws from ``[lo, hi)`` in row-major order.

    :raises RangeError: When ``lo >= hi``.
    """
    dims = check_shape(shape)
    if not lo < hi:
        raise RangeError(f"Empty uniform range [{lo}, {hi})")
    dtype = get_dtype()
    values = (lo + (hi - lo) * rng.uniform(math.prod(dims))).astype(dtype)
    # rounding to float32 can land exactly on hi
    ceiling = np.nextafter(dtype(hi), dtype(lo))
    values = np.where(values >= dtype(hi), ceiling, values)
    return values.reshape(dims)


def tensor_elementwise(a: NDTensor, b: NDTensor, op: Literal["add", "sub", "mul"]) -> NDTensor:
    """Pointwise ``add``, ``sub`` or ``mul`` of two equally shaped tensors."""
    if a.shape != b.shape:
        raise ShapeError(f"Elementwise {op} needs identical shapes, got {a.shape} and {b.shape}")
    if op == "add":
        return np.add(a, b)
    if op == "sub":
        return np.subtract(a, b)
    if op == "mul":
        return np.multiply(a, b)
    raise RangeError(f"Unsupported elementwise op {op!r}")


def tensor_matmul(a: NDTensor, b: NDTensor) -> NDTensor:
    """Matrix product of ``[M, K]`` and ``[K, N]`` tensors.

    Each output element is accumulated over ``k = 0 .. K-1`` in ascending order, one
    rounded multiply and one rounded add per step, without BLAS.
    """
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects rank-2 operands, got ranks {a.ndim} and {b.ndim}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Inner extents differ: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]), dtype=np.result_type(a, b))
    for k in range(a.shape[1]):
        out += np.multiply.outer(a[:, k], b[k])
    return out
