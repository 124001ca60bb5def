import numpy as np
import pytest

from sparsim.error_feedback import error_metric, sent_values
from sparsim.exceptions import ConfigurationError, DivergenceError
from sparsim.harness import RunConfig, Trainer, calibrate_threshold, run_dense, run_experiment
from sparsim.sparsifiers import SparsifierConfig

KINDS = ["micro", "topk", "cltk", "hard_threshold"]


def cfg(kind="micro", density=0.05, **kw):
    base = dict(task="quadratic", dim=300, workers=4, iterations=40, lr=0.02, seed=7)
    base.update(kw)
    return RunConfig(sparsifier=SparsifierConfig(kind=kind, density=density), **base)


def test_learning_rate_schedule():
    c = RunConfig(iterations=100, lr=0.4, decay_factor=0.5)
    assert c.decay_iteration == 75
    assert c.learning_rate(74) == 0.4 and c.learning_rate(75) == 0.2
    assert RunConfig(decay_at=3, lr=1.0).learning_rate(3) == 0.1


@pytest.mark.parametrize("kw", [{"workers": 0}, {"iterations": 0}, {"lr": 0.0}, {"task": "cnn"}])
def test_run_config_validation(kw):
    with pytest.raises(ConfigurationError):
        RunConfig(**kw)


def test_calibrate_threshold(rng):
    acc = rng.standard_normal(100)
    delta = calibrate_threshold(acc, 7)
    assert np.sum(np.abs(acc) > delta) == 7
    assert calibrate_threshold(acc, 100) == 0.0


@pytest.mark.parametrize("kind", KINDS)
def test_workers_stay_synchronized(kind):
    trainer = Trainer(cfg(kind))
    for _ in range(15):
        trainer.step()
        x0 = trainer.workers[0].x
        assert all(np.array_equal(w.x, x0) for w in trainer.workers)


@pytest.mark.parametrize("kind", KINDS)
def test_density_one_matches_dense(kind):
    c = cfg(kind, density=1.0, iterations=30)
    sparse = run_experiment(c)
    dense = run_dense(c)
    assert sparse.final_model.tobytes() == dense.final_model.tobytes()
    assert all(r.error_norm == 0.0 for r in sparse.records)


def test_single_worker_micro_is_thresholded_ef_sgd():
    """n=1: partition is the full range; replay the threshold rule by hand."""
    c = cfg("micro", density=0.1, workers=1, iterations=25)
    seen = []
    run_experiment(c, observer=seen.append)
    e = np.zeros(300)
    for tr in seen:
        acc = e + tr.lr * tr.grads[0]
        idx = tr.selections[0].indices
        assert np.array_equal(acc, tr.accs[0])
        assert np.all(np.abs(np.delete(acc, idx)) <= np.min(np.abs(acc[idx]), initial=np.inf))
        e = acc.copy()
        e[idx] = 0.0
        assert np.array_equal(e, tr.residuals_after[0])


def test_observer_sees_conservation():
    seen = []
    run_experiment(cfg("topk", iterations=10), observer=seen.append)
    for tr in seen:
        for i in range(4):
            lhs = tr.residuals_after[i] + sent_values(tr.accs[i], tr.aggregated)
            rhs = tr.residuals_before[i] + tr.lr * tr.grads[i]
            assert np.array_equal(lhs, rhs)


def test_records_report_eq1_error():
    seen = []
    result = run_experiment(cfg("micro", iterations=10), observer=seen.append)
    for r, tr in zip(result.records, seen):
        assert abs(r.error_norm - error_metric(tr.residuals_after)) <= 1e-12


def test_micro_density_identity():
    result = run_experiment(cfg("micro", iterations=30))
    for r in result.records:
        assert r.union_size == r.total_selected
        assert r.actual_density == r.total_selected / 300
        assert r.redundant_traffic_factor == 1.0


def test_cltk_sends_exactly_k():
    result = run_experiment(cfg("cltk", iterations=30))
    assert all(r.union_size == 15 for r in result.records)


def test_determinism():
    a = run_experiment(cfg("micro", iterations=20))
    b = run_experiment(cfg("micro", iterations=20))
    assert a.records == b.records


def test_threads_match_sequential():
    a = run_experiment(cfg("hard_threshold", iterations=15))
    b = run_experiment(cfg("hard_threshold", iterations=15, threads=3))
    assert a.records == b.records
    assert a.final_model.tobytes() == b.final_model.tobytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    with pytest.raises(DivergenceError, match="iteration"):
        run_experiment(RunConfig(task="quadratic", dim=50, workers=2, iterations=3000, lr=50.0,
                                 sparsifier=SparsifierConfig(kind="topk", density=0.5)))


def test_error_feedback_beats_discarding():
    wins = 0
    for seed in range(5):
        kw = dict(task="quadratic", dim=2000, workers=4, iterations=600, lr=0.02, seed=seed)
        on = run_experiment(RunConfig(sparsifier=SparsifierConfig(kind="micro", density=0.01), **kw))
        off = run_experiment(RunConfig(sparsifier=SparsifierConfig(kind="micro", density=0.01),
                                       error_feedback=False, **kw))
        wins += on.final_loss < off.final_loss
    assert wins == 5


def test_summary_fields():
    s = run_experiment(cfg("micro", iterations=10)).summary
    assert set(s) >= {"final_loss", "mean_actual_density", "mean_buildup_factor",
                      "mean_redundant_traffic_factor", "modeled_time", "modeled_total_time"}
    assert all(v >= 0 for v in s["modeled_time"].values())
