"""Gradient sparsification for simulated synchronous data-parallel SGD."""
from .collectives import AggregatedSelection, CostModelParams, all_gather_indices, all_reduce_sparse
from .exceptions import (
    ConfigurationError, DimensionError, DivergenceError, ProtocolError, SparsimError,
)
from .harness import RunConfig, RunResult, Trainer, run_dense, run_experiment
from .metrics import IterationRecord, emit, load_csv, load_json
from .sparsifiers import SparseSelection, SparsifierConfig, make_sparsifier
from .tasks import make_task

__version__ = "0.1.0"

__all__ = [
    "AggregatedSelection", "ConfigurationError", "CostModelParams", "DimensionError",
    "DivergenceError", "IterationRecord", "ProtocolError", "RunConfig", "RunResult",
    "SparseSelection", "SparsifierConfig", "SparsimError", "Trainer", "all_gather_indices",
    "all_reduce_sparse", "emit", "load_csv", "load_json", "make_sparsifier", "make_task",
    "run_dense", "run_experiment",
]
