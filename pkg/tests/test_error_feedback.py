import numpy as np
import pytest

from sparsim.error_feedback import accumulate, compensate, error_metric, sent_values, zero_residual
from sparsim.sparsifiers import SparseSelection


def test_accumulate_examples():
    g = np.array([0.3, -1.2, 4.0])
    assert accumulate(zero_residual(3), 1.0, g).tolist() == g.tolist()
    assert accumulate([1.0, 1.0], 0.5, [2.0, 0.0]).tolist() == [2.0, 1.0]
    with pytest.raises(ValueError):
        accumulate([1.0], 0.0, [1.0])


def test_residual_grows_without_selection():
    # scalar oracle: e_t = t * eta * g for a constant same-sign gradient
    e = zero_residual(4)
    g = np.array([1.0, 2.0, 0.5, 3.0])
    norms = []
    for t in range(1, 20):
        e = compensate(accumulate(e, 0.1, g), [])
        norms.append(np.linalg.norm(e))
        np.testing.assert_allclose(e, t * 0.1 * g, rtol=1e-12)
    assert all(b > a for a, b in zip(norms, norms[1:]))


def test_compensate_examples():
    acc = np.array([3.0, 4.0, 5.0])
    assert compensate(acc, [0, 1, 2]).tolist() == [0, 0, 0]
    assert compensate(acc, []).tolist() == acc.tolist()
    assert compensate(acc, SparseSelection.from_indices(acc, [1])).tolist() == [3.0, 0.0, 5.0]
    assert acc.tolist() == [3.0, 4.0, 5.0]


def test_conservation_is_exact(rng):
    e = rng.standard_normal(50)
    g = rng.standard_normal(50)
    acc = accumulate(e, 0.07, g)
    idx = np.sort(rng.choice(50, 9, replace=False))
    assert np.array_equal(compensate(acc, idx) + sent_values(acc, idx), acc)


def test_error_metric_examples():
    assert error_metric([zero_residual(5), zero_residual(5)]) == 0.0
    assert error_metric([np.array([3.0, 0.0]), np.array([0.0, 5.0])]) == 4.0
    assert error_metric([np.array([3.0, 4.0])]) == 5.0
    with pytest.raises(ValueError):
        error_metric([])
