"""Residual accumulation of unsent gradients and the mean-local-error metric."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import as_vector, axpy, l2_norm


def zero_residual(n_g: int) -> np.ndarray:
    return np.zeros(n_g)


def accumulate(e, eta: float, grad) -> np.ndarray:
    """``e + eta * grad``: the vector a worker selects from.

    The residual stores learning-rate-scaled gradients, so the model update
    applies no further ``eta``.
    """
    if not eta > 0:
        raise ValueError(f"learning rate must be positive, got {eta}")
    return axpy(e, eta, grad)


def compensate(acc, indices) -> np.ndarray:
    """Residual carried to the next iteration: ``acc`` with ``indices`` zeroed.

    ``indices`` may be a :class:`~sparsim.sparsifiers.SparseSelection`, an
    aggregated selection, or a plain index array.
    """
    idx = getattr(indices, "indices", indices)
    out = as_vector(acc).copy()
    out[np.asarray(idx, dtype=np.int64)] = 0.0
    return out


def sent_values(acc, indices) -> np.ndarray:
    """Dense vector holding ``acc`` at ``indices`` and zero elsewhere."""
    idx = np.asarray(getattr(indices, "indices", indices), dtype=np.int64)
    acc = as_vector(acc)
    out = np.zeros_like(acc)
    out[idx] = acc[idx]
    return out


def error_metric(residuals: Sequence) -> float:
    """Mean of the per-worker residual L2 norms."""
    if len(residuals) == 0:
        raise ValueError("error metric needs at least one worker residual")
    return float(sum(l2_norm(e) for e in residuals) / len(residuals))
