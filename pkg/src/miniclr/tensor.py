"""Float64 array helpers and a splittable, counter-based random generator.

Values throughout the package are plain numpy float64 arrays in row-major
order. The helpers here add the shape and finiteness checking everything
else relies on, so a NaN or Inf surfaces as an error instead of silently
propagating through a training run.

Randomness is pinned to Philox4x64 keyed by (seed, stream): the same pair
reproduces the same draw sequence on every platform, and distinct streams
are independent, which is what makes augmentation and batch order
reproducible regardless of scheduling. `Rng.child` derives substreams via
a SplitMix64 chain over integer or string labels.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

Tensor = np.ndarray

_MASK64 = (1 << 64) - 1


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class NumericsError(ArithmeticError):
    """A non-finite value appeared where finite math is required."""


def as_tensor(values) -> Tensor:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(values, dtype=np.float64)


def assert_finite(x: Tensor, context: str) -> Tensor:
    """Raise NumericsError if `x` contains NaN or Inf; return `x` otherwise."""
    if not np.isfinite(x).all():
        raise NumericsError(f"non-finite values in {context}")
    return x


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a 2-D (r, k) by (k, c) pair with finiteness check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} vs {b.shape}")
    return assert_finite(a @ b, "matmul result")


def transpose(a: Tensor) -> Tensor:
    """2-D transpose (a view; transpose twice returns the original values)."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"transpose expects a 2-D operand, got {a.shape}")
    return a.T


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def _mix_stream(stream: int, ids: Sequence[int | str]) -> int:
    """Fold labels into a parent stream id, SplitMix64 step per label."""
    h = stream & _MASK64
    for part in ids:
        if isinstance(part, str):
            for byte in part.encode("utf-8"):
                h = _splitmix64(h ^ byte)
        else:
            h = _splitmix64(h ^ (int(part) & _MASK64))
    return h


class Rng:
    """Deterministic random stream identified by (seed, stream).

    Backed by the Philox4x64 counter-based generator with key
    [seed, stream]. Constructing the same (seed, stream) always replays
    the same sequence; `child` derives a fresh stream whose draws are
    independent of the parent's.
    """

    __slots__ = ("seed", "stream", "_gen")

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream = int(stream) & _MASK64
        self._gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.stream], dtype=np.uint64))
        )

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream={self.stream})"

    def child(self, *ids: int | str) -> "Rng":
        """Derive an independent substream keyed by the given labels."""
        return Rng(self.seed, _mix_stream(_splitmix64(self.stream ^ 0xA5A5A5A5A5A5A5A5), ids))

    def clone(self) -> "Rng":
        """Copy that replays the exact remaining draw sequence."""
        twin = Rng(self.seed, self.stream)
        twin._gen.bit_generator.state = self._gen.bit_generator.state
        return twin

    def uniform(self, lo: float, hi: float, shape=None) -> Tensor | float:
        """I.i.d. samples in [lo, hi); scalar when shape is None."""
        if lo > hi:
            raise ValueError(f"uniform bounds reversed: lo={lo} > hi={hi}")
        u = self._gen.random() if shape is None else self._gen.random(shape)
        return u * (hi - lo) + lo

    def integers(self, lo: int, hi: int, shape=None):
        """Integer samples in [lo, hi)."""
        if lo >= hi:
            raise ValueError(f"integers needs lo < hi, got [{lo}, {hi})")
        return self._gen.integers(lo, hi) if shape is None else self._gen.integers(lo, hi, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        """Random permutation of range(n)."""
        return self._gen.permutation(n)


def uniform(rng: Rng, lo: float, hi: float, shape) -> Tensor:
    """I.i.d. float64 samples in [lo, hi) with the given shape."""
    return np.asarray(rng.uniform(lo, hi, shape), dtype=np.float64)
