"""Flat gradient-vector arithmetic and balanced contiguous partitioning.

All vectors are 1-D float64 numpy arrays. Operations here never mutate their
inputs; callers that want in-place updates do them explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, DimensionError

DTYPE = np.float64


def as_vector(data) -> np.ndarray:
    v = np.asarray(data, dtype=DTYPE)
    if v.ndim != 1:
        raise DimensionError(f"expected a flat vector, got shape {v.shape}")
    return v


def _check_same_length(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")


def axpy(y, alpha: float, x) -> np.ndarray:
    """Return ``y + alpha * x`` as a new vector."""
    y = as_vector(y)
    x = as_vector(x)
    _check_same_length(y, x)
    return y + alpha * x


def l2_norm(v) -> float:
    return float(np.linalg.norm(as_vector(v)))


@dataclass(frozen=True)
class PartitionRange:
    start: int
    end: int
    owner: int

    @property
    def size(self) -> int:
        return self.end - self.start

    def as_slice(self) -> slice:
        return slice(self.start, self.end)


def partition_bounds(n_g: int, n: int) -> np.ndarray:
    """Boundaries of the ``n`` balanced ranges of ``[0, n_g)``.

    The first ``n_g % n`` ranges are one element longer than the rest.
    Returns an array of ``n + 1`` offsets.
    """
    if n < 1:
        raise ConfigurationError(f"need at least one worker, got n={n}")
    if n_g < n:
        raise ConfigurationError(f"cannot split {n_g} gradients across {n} workers")
    base, rem = divmod(n_g, n)
    sizes = np.full(n, base, dtype=np.int64)
    sizes[:rem] += 1
    return np.concatenate(([0], np.cumsum(sizes)))


def cycle_of(n: int, t: int, i: int) -> int:
    return (t % n + i) % n


def partition(n_g: int, n: int, t: int, i: int) -> PartitionRange:
    """Range searched by worker ``i`` at iteration ``t``.

    Ranges rotate cyclically so every worker visits each range once in any
    window of ``n`` consecutive iterations.
    """
    if not 0 <= i < n:
        raise ConfigurationError(f"worker id {i} outside [0, {n})")
    bounds = partition_bounds(n_g, n)
    c = cycle_of(n, t, i)
    return PartitionRange(int(bounds[c]), int(bounds[c + 1]), i)


def all_partitions(n_g: int, n: int, t: int) -> list[PartitionRange]:
    """Ranges for every worker at iteration ``t``, indexed by worker id."""
    bounds = partition_bounds(n_g, n)
    out = []
    for i in range(n):
        c = cycle_of(n, t, i)
        out.append(PartitionRange(int(bounds[c]), int(bounds[c + 1]), i))
    return out
