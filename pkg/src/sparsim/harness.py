"""Synchronous data-parallel SGD with sparsified, error-compensated aggregation.

One call to :func:`run_iteration` performs, for every worker: accumulate the
scaled gradient into the residual, select indices, AllGather the index sets,
AllReduce the accumulators at the union, scale the threshold, apply the
averaged update, and zero the residual at the union.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import collectives, error_feedback
from .collectives import AggregatedSelection, CostModelParams
from .exceptions import ConfigurationError, DivergenceError
from .metrics import IterationRecord, actual_density
from .sparsifiers import Sparsifier, SparsifierConfig, make_sparsifier
from .tasks import Task, canonical_task, make_task


@dataclass
class RunConfig:
    """Everything needed to reproduce one training run.

    ``sparsifier=None`` runs plain dense synchronous SGD. ``decay_at=None``
    places the single learning-rate step at 3/4 of the run.
    """

    task: str = "quadratic"
    dim: int = 10_000
    n_samples: int | None = None
    workers: int = 4
    iterations: int = 500
    batch_size: int = 16
    lr: float = 0.1
    decay_at: int | None = None
    decay_factor: float = 0.1
    seed: int = 0
    sparsifier: SparsifierConfig | None = field(default_factory=SparsifierConfig)
    cost: CostModelParams = field(default_factory=CostModelParams)
    error_feedback: bool = True
    threads: int = 1

    def __post_init__(self):
        self.task = canonical_task(self.task)
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigurationError(f"learning rate must be positive, got {self.lr}")
        if not 0 < self.decay_factor <= 1:
            raise ConfigurationError(f"decay factor must be in (0, 1], got {self.decay_factor}")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")

    @property
    def decay_iteration(self) -> int:
        return self.decay_at if self.decay_at is not None else (3 * self.iterations) // 4

    def learning_rate(self, t: int) -> float:
        return self.lr * self.decay_factor if t >= self.decay_iteration else self.lr

    def to_dict(self) -> dict:
        return asdict(self)


class BatchSampler:
    """Draws mini-batches without replacement from one worker's shard."""

    def __init__(self, shard: np.ndarray, batch_size: int, rng: np.random.Generator):
        self.shard = shard
        self.batch_size = min(batch_size, shard.shape[0])
        self.rng = rng
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self._order.shape[0]:
            self._order = self.rng.permutation(self.shard)
            self._pos = 0
        batch = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch


@dataclass
class WorkerState:
    rank: int
    x: np.ndarray
    residual: np.ndarray
    sampler: BatchSampler


@dataclass
class IterationTrace:
    """Raw per-iteration internals, handed to an observer callback."""

    t: int
    lr: float
    grads: list
    residuals_before: list
    accs: list
    selections: list
    aggregated: AggregatedSelection
    global_update: np.ndarray
    residuals_after: list
    model: np.ndarray


@dataclass
class RunResult:
    config: RunConfig
    records: list
    final_loss: float
    final_model: np.ndarray
    summary: dict


def setup(config: RunConfig) -> tuple[Task, list[WorkerState]]:
    """Build the task and identically initialized workers with sharded data."""
    root = np.random.SeedSequence(config.seed)
    task_seq, init_seq, shard_seq, *worker_seqs = root.spawn(3 + config.workers)
    task = make_task(config.task, config.dim, seed=task_seq, n_samples=config.n_samples)
    if task.n_samples < config.workers:
        raise ConfigurationError(f"{task.n_samples} samples cannot be sharded across {config.workers} workers")
    x0 = task.init_params(np.random.default_rng(init_seq))
    perm = np.random.default_rng(shard_seq).permutation(task.n_samples)
    shards = np.array_split(perm, config.workers)
    workers = [
        WorkerState(
            rank=i,
            x=x0.copy(),
            residual=error_feedback.zero_residual(task.dimension),
            sampler=BatchSampler(shards[i], config.batch_size, np.random.default_rng(worker_seqs[i])),
        )
        for i in range(config.workers)
    ]
    return task, workers


def calibrate_threshold(acc: np.ndarray, k: int) -> float:
    """Threshold under which exactly the ``k`` largest magnitudes pass ``|a| > delta``
    (up to ties)."""
    mag = np.abs(acc)
    if k >= mag.shape[0]:
        return 0.0
    return float(np.partition(mag, mag.shape[0] - k - 1)[mag.shape[0] - k - 1])


def _local_step(task, worker, eta, t):
    batch = worker.sampler.next()
    loss, g = task.loss_and_grad(worker.x, batch)
    if not np.all(np.isfinite(g)):
        raise DivergenceError(
            f"non-finite gradient on worker {worker.rank} at iteration {t}; "
            f"max |x| = {np.max(np.abs(worker.x)):.3g}, lr = {eta}"
        )
    return loss, g


class Trainer:
    """Holds the mutable state of one run and advances it iteration by iteration."""

    def __init__(self, config: RunConfig, observer: Callable[[IterationTrace], None] | None = None):
        if config.sparsifier is None:
            raise ConfigurationError("Trainer needs a sparsifier; use run_dense for uncompressed SGD")
        self.config = config
        self.task, self.workers = setup(config)
        self.n_g = self.task.dimension
        self.sparsifier: Sparsifier = make_sparsifier(config.sparsifier, config.workers, self.n_g)
        self.initial_threshold = config.sparsifier.initial_threshold
        self._threshold_ready = self.initial_threshold is not None
        if self._threshold_ready:
            self._set_threshold(config.sparsifier.initial_threshold)
        self.observer = observer
        self._pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None
        self.t = 0

    def _set_threshold(self, delta: float) -> None:
        self.sparsifier = make_sparsifier(self.config.sparsifier, self.config.workers, self.n_g, delta)
        self.initial_threshold = delta

    def _gradients(self, eta):
        if self._pool is None:
            return [_local_step(self.task, w, eta, self.t) for w in self.workers]
        return list(self._pool.map(lambda w: _local_step(self.task, w, eta, self.t), self.workers))

    def step(self) -> IterationRecord:
        return run_iteration(self)

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def run_iteration(trainer: Trainer) -> IterationRecord:
    cfg = trainer.config
    t = trainer.t
    n = cfg.workers
    eta = cfg.learning_rate(t)
    workers = trainer.workers

    results = trainer._gradients(eta)
    losses = [r[0] for r in results]
    grads = [r[1] for r in results]
    before = [w.residual for w in workers]
    if cfg.error_feedback:
        accs = [error_feedback.accumulate(w.residual, eta, g) for w, g in zip(workers, grads)]
    else:
        accs = [error_feedback.accumulate(error_feedback.zero_residual(trainer.n_g), eta, g) for g in grads]

    if not trainer._threshold_ready:
        trainer._set_threshold(calibrate_threshold(accs[0], trainer.sparsifier.k_global))
        trainer._threshold_ready = True

    sparsifier = trainer.sparsifier
    thresholds = sparsifier.thresholds()
    selections = sparsifier.select(accs, t)
    agg = collectives.all_gather_indices(selections)
    g_t = collectives.all_reduce_sparse(accs, agg)
    sparsifier.estimate(selections)

    update = g_t / n
    for w in workers:
        w.x = w.x - update
    after = []
    for w, acc in zip(workers, accs):
        w.residual = error_feedback.compensate(acc, agg) if cfg.error_feedback else error_feedback.zero_residual(trainer.n_g)
        after.append(w.residual)
    if not np.all(np.isfinite(workers[0].x)):
        raise DivergenceError(f"model became non-finite at iteration {t} (lr = {eta})")

    c = cfg.cost
    work = sparsifier.work_per_worker(t)
    record = IterationRecord(
        t=t,
        lr=eta,
        loss=float(np.mean(losses)),
        threshold=float(np.mean(thresholds)),
        union_size=agg.union_size,
        total_selected=agg.total_selected,
        max_worker_count=max(agg.per_worker_counts),
        actual_density=actual_density(agg, trainer.n_g),
        redundant_traffic_factor=agg.redundant_traffic_factor,
        buildup_factor=collectives.buildup_factor(agg, sparsifier.k_global),
        error_norm=error_feedback.error_metric(after),
        time_grad=c.seconds_per_grad_element * trainer.n_g * workers[0].sampler.batch_size,
        time_selection=c.seconds_per_scan_element * max(work),
        time_communication=collectives.communication_cost(agg, c),
        time_overhead=c.seconds_per_estimate if sparsifier.kind == "micro" else 0.0,
    )
    if trainer.observer is not None:
        trainer.observer(IterationTrace(t, eta, grads, before, accs, selections, agg, g_t, after, workers[0].x))
    trainer.t += 1
    return record


def summarize(records: list, final_loss: float) -> dict:
    def mean(name):
        return float(np.mean([getattr(r, name) for r in records])) if records else math.nan

    times = {p: float(sum(getattr(r, f"time_{p}") for r in records))
             for p in ("grad", "selection", "communication", "overhead")}
    return {
        "final_loss": final_loss,
        "mean_actual_density": mean("actual_density"),
        "mean_buildup_factor": mean("buildup_factor"),
        "mean_redundant_traffic_factor": mean("redundant_traffic_factor"),
        "mean_error_norm": mean("error_norm"),
        "modeled_time": times,
        "modeled_total_time": float(sum(times.values())),
    }


def run_experiment(config: RunConfig, observer=None) -> RunResult:
    """Run every iteration of ``config``; dispatches to :func:`run_dense` when
    no sparsifier is configured."""
    if config.sparsifier is None:
        return run_dense(config)
    trainer = Trainer(config, observer)
    try:
        records = [trainer.step() for _ in range(config.iterations)]
    finally:
        trainer.close()
    x = trainer.workers[0].x
    final_loss = trainer.task.loss(x)
    summary = summarize(records, final_loss)
    summary["initial_threshold"] = trainer.initial_threshold
    summary["n_g"] = trainer.n_g
    return RunResult(config, records, final_loss, x.copy(), summary)


def run_dense(config: RunConfig, on_step: Callable[[int, np.ndarray], None] | None = None) -> RunResult:
    """Uncompressed synchronous SGD: every worker sends its full scaled gradient.

    Shares data sharding and batch order with the sparsified harness but
    none of its selection or aggregation code, so it can serve as an oracle.
    ``on_step(t, x)`` sees the model after each update.
    """
    task, workers = setup(config)
    n, n_g = config.workers, task.dimension
    x = workers[0].x.copy()
    c = config.cost
    records = []
    for t in range(config.iterations):
        eta = config.learning_rate(t)
        total = np.zeros(n_g)
        losses = []
        for w in workers:
            loss, g = task.loss_and_grad(x, w.sampler.next())
            if not np.all(np.isfinite(g)):
                raise DivergenceError(f"non-finite gradient on worker {w.rank} at iteration {t}")
            losses.append(loss)
            total = total + eta * g
        x = x - total / n
        if on_step is not None:
            on_step(t, x)
        records.append(IterationRecord(
            t=t, lr=eta, loss=float(np.mean(losses)), threshold=0.0,
            union_size=n_g, total_selected=n_g, max_worker_count=n_g,
            actual_density=1.0, redundant_traffic_factor=1.0, buildup_factor=1.0,
            error_norm=0.0,
            time_grad=c.seconds_per_grad_element * n_g * workers[0].sampler.batch_size,
            time_selection=0.0,
            time_communication=c.latency_per_collective + n_g * c.bytes_per_element / c.bandwidth,
            time_overhead=0.0,
        ))
    final_loss = task.loss(x)
    summary = summarize(records, final_loss)
    summary["n_g"] = n_g
    return RunResult(config, records, final_loss, x, summary)
