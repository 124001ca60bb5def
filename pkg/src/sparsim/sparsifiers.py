"""Gradient-selection strategies: MiCRO, Top-k, CLT-k and hard-threshold.

Every strategy turns the per-worker accumulators of one iteration into one
:class:`SparseSelection` per worker. Stateless selection primitives are
module-level functions; the classes only hold configuration and thresholds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, ProtocolError
from .tensor import PartitionRange, all_partitions, as_vector

KINDS = ("micro", "topk", "cltk", "hard_threshold")

_INDEX_DTYPE = np.int64


@dataclass(frozen=True)
class SparseSelection:
    indices: np.ndarray
    values: np.ndarray

    @property
    def count(self) -> int:
        return int(self.indices.shape[0])

    def check(self, n_g: int) -> None:
        """Raise ``AssertionError`` if the selection is malformed."""
        assert self.indices.shape == self.values.shape
        if self.count:
            assert np.all(np.diff(self.indices) > 0), "indices not strictly increasing"
            assert self.indices[0] >= 0 and self.indices[-1] < n_g

    @classmethod
    def empty(cls) -> "SparseSelection":
        return cls(np.empty(0, dtype=_INDEX_DTYPE), np.empty(0))

    @classmethod
    def from_indices(cls, acc: np.ndarray, indices: np.ndarray) -> "SparseSelection":
        indices = np.asarray(indices, dtype=_INDEX_DTYPE)
        return cls(indices, acc[indices])


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass
class SparsifierConfig:
    """Selection settings shared by all strategies.

    ``initial_threshold=None`` lets the training harness calibrate one from
    the first gradient. ``per_worker_k`` picks MiCRO's per-worker target:
    ``"split"`` aims each worker at ``d*n_g/n`` so the aggregate hits
    ``d*n_g``; ``"full"`` aims every worker at ``d*n_g``.
    """

    kind: str = "micro"
    density: float = 0.01
    initial_threshold: float | None = None
    scaling_factor: float = 0.01
    min_threshold: float = 1e-12
    per_worker_k: str = "split"
    threshold_scope: str = "global"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown sparsifier kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 < self.density <= 1.0:
            raise ConfigurationError(f"density must be in (0, 1], got {self.density}")
        if self.initial_threshold is not None and not (
            math.isfinite(self.initial_threshold) and self.initial_threshold >= 0
        ):
            raise ConfigurationError(f"initial threshold must be finite and >= 0, got {self.initial_threshold}")
        if not 0.0 < self.scaling_factor < 1.0:
            raise ConfigurationError(f"scaling factor must be in (0, 1), got {self.scaling_factor}")
        if self.min_threshold <= 0:
            raise ConfigurationError("min_threshold must be positive")
        if self.per_worker_k not in ("split", "full"):
            raise ConfigurationError(f"per_worker_k must be 'split' or 'full', got {self.per_worker_k!r}")
        if self.threshold_scope not in ("local", "global"):
            raise ConfigurationError(f"threshold_scope must be 'local' or 'global', got {self.threshold_scope!r}")

    def global_k(self, n_g: int) -> int:
        return max(1, round_half_up(self.density * n_g))

    def worker_k(self, n_g: int, n: int) -> int:
        if self.per_worker_k == "full":
            return self.global_k(n_g)
        return max(1, round_half_up(self.density * n_g / n))


@dataclass
class ThresholdState:
    delta: float

    def __post_init__(self):
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise ConfigurationError(f"threshold must be finite and >= 0, got {self.delta}")


# -- selection primitives ---------------------------------------------------


def select_by_threshold(acc, rng: PartitionRange, delta: float) -> SparseSelection:
    """Indices ``j`` in ``rng`` with ``|acc[j]| > delta``."""
    acc = as_vector(acc)
    part = acc[rng.start:rng.end]
    idx = np.flatnonzero(np.abs(part) > delta).astype(_INDEX_DTYPE) + rng.start
    return SparseSelection(idx, acc[idx])


def select_range(acc, rng: PartitionRange) -> SparseSelection:
    acc = as_vector(acc)
    idx = np.arange(rng.start, rng.end, dtype=_INDEX_DTYPE)
    return SparseSelection(idx, acc[rng.start:rng.end].copy())


def select_topk(acc, rng: PartitionRange, k: int) -> SparseSelection:
    """The ``k`` largest-magnitude entries of ``acc`` inside ``rng``.

    Ties at the cut-off magnitude go to the lower index. Runs in linear
    time via ``argpartition``; the result is returned in index order.
    """
    acc = as_vector(acc)
    size = rng.end - rng.start
    if k < 0 or k > size:
        raise ValueError(f"k={k} outside [0, {size}] for range [{rng.start}, {rng.end})")
    if k == 0:
        return SparseSelection.empty()
    if k == size:
        return select_range(acc, rng)
    mag = np.abs(acc[rng.start:rng.end])
    kth = np.partition(mag, size - k)[size - k]
    above = np.flatnonzero(mag > kth)
    ties = np.flatnonzero(mag == kth)[: k - above.shape[0]]
    local = np.sort(np.concatenate((above, ties)))
    idx = local.astype(_INDEX_DTYPE) + rng.start
    return SparseSelection(idx, acc[idx])


def micro_update_threshold(
    state: ThresholdState,
    k_target: int,
    k_selected: int,
    alpha: float,
    min_threshold: float = 1e-12,
) -> ThresholdState:
    """Scale the threshold toward the target selection count.

    Too many selections raise the threshold by ``(1 + alpha)``, too few
    lower it by ``(1 - alpha)``. A zero threshold that selects too much is
    bumped to ``min_threshold`` so the multiplicative rule can act.
    """
    delta = state.delta
    if k_selected > k_target:
        delta = delta * (1.0 + alpha) if delta > 0 else min_threshold
    elif k_selected < k_target:
        delta = delta * (1.0 - alpha)
    return ThresholdState(delta)


def cltk_select(acc_leader, k_total: int, leader: int, t: int, n: int) -> SparseSelection:
    """Global top-k chosen by the iteration's leader (worker ``t mod n``)."""
    if leader != t % n:
        raise ProtocolError(f"worker {leader} is not the leader at iteration {t} (leader is {t % n})")
    acc_leader = as_vector(acc_leader)
    return select_topk(acc_leader, PartitionRange(0, acc_leader.shape[0], leader), k_total)


def hard_threshold_select(acc, delta_fixed: float) -> SparseSelection:
    acc = as_vector(acc)
    return select_by_threshold(acc, PartitionRange(0, acc.shape[0], 0), delta_fixed)


# -- strategies -------------------------------------------------------------


class Sparsifier:
    """Per-run selection state for ``n`` workers over ``n_g`` gradients."""

    kind = ""
    sorts = False

    def __init__(self, config: SparsifierConfig, n: int, n_g: int):
        self.config = config
        self.n = n
        self.n_g = n_g
        self.k_global = config.global_k(n_g)
        self.compress = config.density < 1.0

    def thresholds(self) -> list[float]:
        return [0.0] * self.n

    def select(self, accs, t: int) -> list[SparseSelection]:
        raise NotImplementedError

    def estimate(self, selections: list[SparseSelection]) -> None:
        """Post-aggregation hook; only threshold-adaptive strategies use it."""

    def work_per_worker(self, t: int) -> list[float]:
        """Elements scanned by each worker this iteration (for the cost model)."""
        raise NotImplementedError


class MiCRO(Sparsifier):
    """Exclusive threshold selection on cyclically assigned partitions."""

    kind = "micro"

    def __init__(self, config: SparsifierConfig, n: int, n_g: int, initial_threshold: float = 0.0):
        super().__init__(config, n, n_g)
        self.k_worker = config.worker_k(n_g, n)
        self.states = [ThresholdState(initial_threshold) for _ in range(n)]

    def thresholds(self) -> list[float]:
        return [s.delta for s in self.states]

    def select(self, accs, t):
        parts = all_partitions(self.n_g, self.n, t)
        if not self.compress:
            return [select_range(accs[i], parts[i]) for i in range(self.n)]
        return [select_by_threshold(accs[i], parts[i], self.states[i].delta) for i in range(self.n)]

    def estimate(self, selections):
        if not self.compress:
            return
        cfg = self.config
        if cfg.threshold_scope == "global":
            total = sum(sel.count for sel in selections)
            target = self.k_worker * self.n
            self.states = [
                micro_update_threshold(s, target, total, cfg.scaling_factor, cfg.min_threshold)
                for s in self.states
            ]
            return
        self.states = [
            micro_update_threshold(s, self.k_worker, sel.count, cfg.scaling_factor, cfg.min_threshold)
            for s, sel in zip(self.states, selections)
        ]

    def work_per_worker(self, t):
        return [float(p.size) for p in all_partitions(self.n_g, self.n, t)]


class TopK(Sparsifier):
    """Every worker picks its own top-k over the full vector."""

    kind = "topk"
    sorts = True

    def select(self, accs, t):
        full = PartitionRange(0, self.n_g, 0)
        return [select_topk(accs[i], full, self.k_global) for i in range(self.n)]

    def work_per_worker(self, t):
        return [self.n_g * max(1.0, math.log2(self.k_global))] * self.n


class CLTk(Sparsifier):
    """A rotating leader picks the global top-k; the others contribute only values."""

    kind = "cltk"
    sorts = True

    def select(self, accs, t):
        leader = t % self.n
        out = [SparseSelection.empty() for _ in range(self.n)]
        out[leader] = cltk_select(accs[leader], self.k_global, leader, t, self.n)
        return out

    def work_per_worker(self, t):
        work = [0.0] * self.n
        work[t % self.n] = self.n_g * max(1.0, math.log2(self.k_global))
        return work


class HardThreshold(Sparsifier):
    """Fixed threshold over the full vector, never adjusted."""

    kind = "hard_threshold"

    def __init__(self, config: SparsifierConfig, n: int, n_g: int, initial_threshold: float = 0.0):
        super().__init__(config, n, n_g)
        self.delta = float(initial_threshold)

    def thresholds(self):
        return [self.delta] * self.n

    def select(self, accs, t):
        if not self.compress:
            full = PartitionRange(0, self.n_g, 0)
            return [select_range(a, full) for a in accs]
        return [hard_threshold_select(a, self.delta) for a in accs]

    def work_per_worker(self, t):
        return [float(self.n_g)] * self.n


_CLASSES = {"micro": MiCRO, "topk": TopK, "cltk": CLTk, "hard_threshold": HardThreshold}


def make_sparsifier(config: SparsifierConfig, n: int, n_g: int, initial_threshold: float = 0.0) -> Sparsifier:
    cls = _CLASSES[config.kind]
    if cls in (MiCRO, HardThreshold):
        return cls(config, n, n_g, initial_threshold)
    return cls(config, n, n_g)
