import numpy as np
import pytest

from metanet import Metapopulation, OutbreakSeries, StateSeries
from metanet.dynamics import states_from_deltas
from metanet.synthetic import generate_outbreak, make_scenario

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


def seeded_outbreak(sc, days, n_seeds=3, cases=20.0, rng=None, choices=None, **kw):
    """Outbreak on ``sc`` started with ``cases`` in ``n_seeds`` random zones."""
    rng = np.random.default_rng(0) if rng is None else rng
    pool = sc.pop.n if choices is None else choices
    d1 = np.zeros(sc.pop.n)
    d1[rng.choice(pool, n_seeds, replace=False)] = cases
    return generate_outbreak(sc, days, d1, **kw)


def random_states(n, t, rng) -> StateSeries:
    return StateSeries(rng.uniform(0.0, 1.0, (t, n)), rng.uniform(0.0, 1.0, (t, n)))


@pytest.fixture
def tiny_pop():
    return Metapopulation(("a", "b", "c"), np.array([1000.0, 2000.0, 3000.0]),
                          np.array([[0.0, 0.0], [3.0, 4.0], [6.0, 0.0]]))


@pytest.fixture(scope="session")
def small_scenario():
    """Noise-free 8-zone scenario with a 40-day outbreak and its states."""
    sc = make_scenario(8, 2, volume_scale=5000.0, seed=3)
    series = seeded_outbreak(sc, 40, n_seeds=2, rng=np.random.default_rng(3))
    return sc, series, states_from_deltas(series, sc.pop)


@pytest.fixture(scope="session")
def noisy_scenario():
    sc = make_scenario(12, 2, volume_scale=5000.0, noise_sigma=2e-5, seed=5)
    series = seeded_outbreak(sc, 60, n_seeds=2, rng=np.random.default_rng(5))
    return sc, series, states_from_deltas(series, sc.pop)


__all__ = ["OutbreakSeries", "record", "seeded_outbreak", "random_states"]
