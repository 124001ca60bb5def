"""In-process AllGather / AllReduce over sparse selections, plus a cost model.

Collectives here are plain functions over lists of per-worker values; they
act as the synchronization points of a simulated iteration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import ConfigurationError, DimensionError


@dataclass(frozen=True)
class AggregatedSelection:
    indices: np.ndarray
    per_worker_counts: tuple[int, ...]

    @property
    def union_size(self) -> int:
        return int(self.indices.shape[0])

    @property
    def total_selected(self) -> int:
        return int(sum(self.per_worker_counts))

    @property
    def redundant_traffic_factor(self) -> float:
        """``sum(counts) / |union|``; 1.0 means no overlap (and is reported when
        nothing was sent)."""
        if self.union_size == 0:
            return 1.0
        return self.total_selected / self.union_size


def all_gather_indices(selections: Sequence) -> AggregatedSelection:
    counts = tuple(int(s.count) for s in selections)
    if not selections:
        raise ValueError("all_gather needs one selection per worker")
    nonempty = [s.indices for s in selections if s.count]
    if nonempty:
        union = np.unique(np.concatenate(nonempty))
    else:
        union = np.empty(0, dtype=np.int64)
    return AggregatedSelection(union, counts)


def all_reduce_sparse(workers_acc: Sequence, agg: AggregatedSelection) -> np.ndarray:
    """Sum every worker's accumulator at the aggregated indices.

    Each worker contributes its value at every aggregated index, not only
    at the ones it selected. Summation runs in worker order.
    """
    n_g = workers_acc[0].shape[0]
    for a in workers_acc:
        if a.shape != (n_g,):
            raise DimensionError(f"accumulator length mismatch: {a.shape} vs ({n_g},)")
    out = np.zeros(n_g)
    idx = agg.indices
    if idx.shape[0] == n_g:
        total = np.zeros(n_g)
        for a in workers_acc:
            total = total + a
        return total
    if idx.shape[0] == 0:
        return out
    total = np.zeros(idx.shape[0])
    for a in workers_acc:
        total = total + a[idx]
    out[idx] = total
    return out


def buildup_factor(agg: AggregatedSelection, k_target_global: int) -> float:
    """Aggregated-count inflation ``|union| / k``.

    Returns 0.0 when nothing was selected. Top-k can reach ``n``; MiCRO
    and CLT-k stay near 1.
    """
    if agg.total_selected == 0:
        return 0.0
    return agg.union_size / k_target_global


@dataclass(frozen=True)
class CostModelParams:
    """Latency/bandwidth network model and per-element compute rates.

    Defaults loosely resemble a 10 Gb/s link and a commodity accelerator;
    only relative magnitudes matter for the simulated breakdown.
    """

    latency_per_collective: float = 5e-5
    bytes_per_element: int = 4
    index_bytes: int = 4
    bandwidth: float = 1.25e9
    seconds_per_grad_element: float = 2e-9
    seconds_per_scan_element: float = 1e-10
    seconds_per_estimate: float = 1e-7

    def __post_init__(self):
        for name in ("latency_per_collective", "bytes_per_element", "index_bytes", "bandwidth"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"cost model {name} must be positive")
        for name in ("seconds_per_grad_element", "seconds_per_scan_element", "seconds_per_estimate"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"cost model {name} must be >= 0")


def bandwidth_seconds(n_elements: int, bytes_per_element: int, params: CostModelParams) -> float:
    return n_elements * bytes_per_element / params.bandwidth


def communication_cost(agg: AggregatedSelection, params: CostModelParams) -> float:
    """Modeled seconds for one AllGather plus one AllReduce.

    ``2 * latency + (sum(counts) * (index + value bytes) + |union| * value bytes) / bandwidth``
    """
    gather = agg.total_selected * (params.index_bytes + params.bytes_per_element)
    reduce = agg.union_size * params.bytes_per_element
    return 2.0 * params.latency_per_collective + (gather + reduce) / params.bandwidth
