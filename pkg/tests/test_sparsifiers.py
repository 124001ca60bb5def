import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sparsim.exceptions import ConfigurationError, ProtocolError
from sparsim.sparsifiers import (
    MiCRO, SparsifierConfig, ThresholdState, cltk_select, hard_threshold_select,
    micro_update_threshold, select_by_threshold, select_topk,
)
from sparsim.tensor import PartitionRange, all_partitions

from conftest import brute_force_threshold, brute_force_topk


def full(n_g):
    return PartitionRange(0, n_g, 0)


def test_select_by_threshold_examples():
    acc = np.array([1.0, -3.0, 0.5, 2.0])
    sel = select_by_threshold(acc, full(4), 1.5)
    assert sel.indices.tolist() == [1, 3]
    assert sel.values.tolist() == [-3.0, 2.0]
    assert sel.count == 2
    assert select_by_threshold(acc, full(4), 3.5).count == 0
    z = np.array([0.0, 1.0, 0.0, -2.0])
    assert select_by_threshold(z, full(4), 0.0).indices.tolist() == [1, 3]


def test_select_by_threshold_respects_range():
    acc = np.arange(10.0)
    sel = select_by_threshold(acc, PartitionRange(3, 6, 1), 0.0)
    assert sel.indices.tolist() == [3, 4, 5]


def test_select_topk_examples():
    acc = np.array([5.0, -7.0, 2.0, 7.0])
    assert select_topk(acc, full(4), 2).indices.tolist() == [1, 3]
    assert select_topk(acc, full(4), 0).count == 0
    assert select_topk(acc, full(4), 4).indices.tolist() == [0, 1, 2, 3]
    with pytest.raises(ValueError):
        select_topk(acc, full(4), 5)


def test_select_topk_tie_goes_to_lower_index():
    acc = np.array([1.0, -2.0, 2.0, 2.0, 0.5])
    assert select_topk(acc, full(5), 2).indices.tolist() == [1, 2]


@settings(max_examples=200, deadline=None)
@given(
    acc=arrays(np.float64, st.integers(1, 300), elements=st.sampled_from([0.0, 1.0, -1.0, 2.5, -2.5, 0.25, 3.0])),
    data=st.data(),
)
def test_select_topk_matches_full_sort(acc, data):
    n_g = acc.shape[0]
    start = data.draw(st.integers(0, n_g - 1))
    end = data.draw(st.integers(start + 1, n_g))
    k = data.draw(st.integers(0, end - start))
    sel = select_topk(acc, PartitionRange(start, end, 0), k)
    assert sel.indices.tolist() == brute_force_topk(acc, start, end, k)
    sel.check(n_g)


@pytest.mark.parametrize("k_sel, expected", [(150, 1.1), (100, 1.0), (40, 0.9)])
def test_micro_update_threshold_examples(k_sel, expected):
    out = micro_update_threshold(ThresholdState(1.0), 100, k_sel, 0.1)
    assert out.delta == pytest.approx(expected, rel=1e-15)


def test_micro_update_escapes_zero():
    assert micro_update_threshold(ThresholdState(0.0), 10, 20, 0.1, 1e-12).delta == 1e-12
    assert micro_update_threshold(ThresholdState(0.0), 10, 5, 0.1).delta == 0.0


@settings(max_examples=200, deadline=None)
@given(delta=st.floats(1e-10, 1e6), k=st.integers(1, 1000), ks=st.integers(0, 2000), alpha=st.floats(1e-4, 0.9))
def test_micro_update_sign(delta, k, ks, alpha):
    new = micro_update_threshold(ThresholdState(delta), k, ks, alpha).delta
    if ks > k:
        assert new > delta
    elif ks < k:
        assert new < delta
    else:
        assert new == delta


def test_cltk_examples():
    acc = np.array([9.0, 0.0, 8.0, 0.0])
    assert cltk_select(acc, 2, leader=1, t=5, n=4).indices.tolist() == [0, 2]
    assert cltk_select(acc, 4, leader=1, t=5, n=4).indices.tolist() == [0, 1, 2, 3]
    with pytest.raises(ProtocolError):
        cltk_select(acc, 2, leader=0, t=5, n=4)


def test_hard_threshold_examples():
    acc = np.array([0.1, 0.9, 0.5])
    assert hard_threshold_select(acc, 0.4).indices.tolist() == [1, 2]
    assert hard_threshold_select(acc, 1.0).count == 0
    assert hard_threshold_select(np.array([0.0, 2.0, 0.0, -1.0]), 0.0).count == 2


@settings(max_examples=200, deadline=None)
@given(acc=arrays(np.float64, st.integers(8, 400), elements=st.floats(-10, 10)),
       delta=st.floats(0, 10), n=st.sampled_from([1, 2, 4, 8]), t=st.integers(0, 100))
def test_partition_filter_invariance(acc, delta, n, t):
    n_g = acc.shape[0]
    parts = all_partitions(n_g, n, t)
    union = np.concatenate([select_by_threshold(acc, p, delta).indices for p in parts])
    assert sorted(union.tolist()) == select_by_threshold(acc, full(n_g), delta).indices.tolist()
    assert sorted(union.tolist()) == brute_force_threshold(acc, 0, n_g, delta)


@settings(max_examples=100, deadline=None)
@given(acc=arrays(np.float64, st.integers(1, 200), elements=st.floats(-5, 5)),
       d1=st.floats(0, 5), d2=st.floats(0, 5))
def test_threshold_monotonicity(acc, d1, d2):
    lo, hi = sorted((d1, d2))
    small = set(select_by_threshold(acc, full(acc.shape[0]), hi).indices.tolist())
    big = set(select_by_threshold(acc, full(acc.shape[0]), lo).indices.tolist())
    assert small <= big


def test_micro_selections_are_exclusive(rng):
    cfg = SparsifierConfig(kind="micro", density=0.05)
    sp = MiCRO(cfg, n=4, n_g=103, initial_threshold=0.5)
    accs = [rng.standard_normal(103) for _ in range(4)]
    for t in range(8):
        sels = sp.select(accs, t)
        seen = set()
        for s in sels:
            assert seen.isdisjoint(s.indices.tolist())
            seen.update(s.indices.tolist())


def test_micro_global_scope_keeps_thresholds_equal(rng):
    cfg = SparsifierConfig(kind="micro", density=0.05, threshold_scope="global")
    sp = MiCRO(cfg, n=4, n_g=200, initial_threshold=0.5)
    for t in range(10):
        sels = sp.select([rng.standard_normal(200) for _ in range(4)], t)
        sp.estimate(sels)
        assert len(set(sp.thresholds())) == 1


def test_target_counts():
    cfg = SparsifierConfig(density=0.01)
    assert cfg.global_k(1000) == 10
    assert cfg.worker_k(1000, 4) == 3  # 2.5 rounds half up
    assert SparsifierConfig(density=1e-6).global_k(100) == 1
    assert SparsifierConfig(density=0.01, per_worker_k="full").worker_k(1000, 4) == 10


@pytest.mark.parametrize("kwargs", [
    {"density": 0.0}, {"density": 1.5}, {"kind": "sidco"}, {"scaling_factor": 1.0},
    {"initial_threshold": -1.0}, {"per_worker_k": "half"}, {"threshold_scope": "shared"},
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        SparsifierConfig(**kwargs)
