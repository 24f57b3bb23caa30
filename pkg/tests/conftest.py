import numpy as np
import pytest

from bilinear_nas.estimator import build
from bilinear_nas.oracle import SyntheticSupernet, gen_latency
from bilinear_nas.search_space import SearchSpaceSpec


def make_problem(spec, seed, epsilon=0.0, noise_std=0.0, exact=True):
    rng = np.random.default_rng(seed)
    oracle = SyntheticSupernet.generate(spec, rng, epsilon=epsilon, noise_std=noise_std)
    lat = gen_latency(spec, rng)
    est = build(oracle, n_per_probe=None if exact else 200, n_repeats=1 if exact else 2, seed=seed)
    return oracle, lat, est


@pytest.fixture
def tiny_spec():
    return SearchSpaceSpec.uniform(2, (1, 2), 2)


@pytest.fixture
def small_spec():
    return SearchSpaceSpec.uniform(3, (1, 2), 3)


def latency_quantile(spec, lat, q):
    """Latency quantile over every architecture of an enumerable space."""
    from bilinear_nas.estimator import eval_lat_batch
    from bilinear_nas.search_space import enumerate_choices

    d, c = enumerate_choices(spec)
    return float(np.quantile(eval_lat_batch(lat, d, c), q))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
