import numpy as np
import pytest


def naive_norm(v):
    total = 0.0
    for x in v:
        total += float(x) * float(x)
    return total ** 0.5


def brute_force_topk(acc, start, end, k):
    """Full sort by (-|value|, index); the first k win."""
    order = sorted(range(start, end), key=lambda j: (-abs(acc[j]), j))
    return sorted(order[:k])


def brute_force_threshold(acc, start, end, delta):
    return [j for j in range(start, end) if abs(acc[j]) > delta]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
