import dataclasses
import warnings

import numpy as np
import pytest

from conftest import seeded_outbreak
from metanet import Metapopulation, OutbreakSeries
from metanet.dynamics import ClampWarning, states_from_deltas
from metanet.errors import AllZeroActuals, InsufficientSupport, InvalidSeries, ZeroNetwork
from metanet.evaluation import (
    cosine_similarity,
    degree_distribution,
    fit_power_law,
    infection_count_importance,
    mape,
    pagerank_importance,
    prediction_report,
    rollout_predict,
    simulate_comparison,
)
from metanet.synthetic import generate_metapopulation, generate_scale_free_mobility, infection_network


def test_cosine_scale_invariance():
    rng = np.random.default_rng(0)
    g = rng.random((4, 4))
    g = g + g.T
    assert cosine_similarity(g, 3.7 * g) == pytest.approx(1.0, abs=1e-15)


def test_cosine_disjoint_supports():
    a = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0.0]])
    b = np.array([[0, 0, 1], [0, 0, 0], [1, 0, 0.0]])
    assert cosine_similarity(a, b) == 0.0


def test_cosine_ignores_diagonal():
    a = np.array([[9.0, 1.0], [1.0, 0.0]])
    b = np.array([[0.0, 2.0], [2.0, 5.0]])
    assert cosine_similarity(a, b) == pytest.approx(1.0, abs=1e-15)


def test_cosine_zero_network():
    with pytest.raises(ZeroNetwork):
        cosine_similarity(np.eye(2), np.ones((2, 2)))


def test_mape_examples():
    a = np.array([3.0, 4.0, 5.0])
    assert mape(a, a) == 0.0
    assert mape(2 * a, a) == 1.0
    assert mape([11.0, 5.0, 18.0], [10.0, 0.0, 20.0]) == pytest.approx(0.1, abs=1e-15)
    with pytest.raises(AllZeroActuals):
        mape([1.0], [0.0])


def test_rollout_exact_on_noise_free_data(small_scenario):
    sc, series, _ = small_scenario
    for t0 in (5, 12, 30):
        pred = rollout_predict(sc.g_true, 1.0, series, sc.pop, t0, 1)
        np.testing.assert_allclose(pred[0], series.deltas[t0], rtol=1e-9, atol=1e-9)


def test_rollout_zero_network(small_scenario):
    sc, series, _ = small_scenario
    assert not rollout_predict(np.zeros((sc.pop.n,) * 2), 1.0, series, sc.pop, 10, 4).any()


def test_rollout_prefix_consistency(noisy_scenario):
    sc, series, _ = noisy_scenario
    short = rollout_predict(sc.g_true, 0.9, series, sc.pop, 20, 3)
    long = rollout_predict(sc.g_true, 0.9, series, sc.pop, 20, 4)
    np.testing.assert_array_equal(short, long[:3])


def test_rollout_does_not_peek(noisy_scenario):
    sc, series, _ = noisy_scenario
    changed = series.deltas.copy()
    changed[25:] *= 0.5
    other = dataclasses.replace(series, deltas=changed)
    np.testing.assert_array_equal(rollout_predict(sc.g_true, 1.0, series, sc.pop, 25, 5),
                                  rollout_predict(sc.g_true, 1.0, other, sc.pop, 25, 5))


def test_error_grows_with_horizon(noisy_scenario):
    # An imperfect network: errors compound over the rollout.
    sc, series, _ = noisy_scenario
    rng = np.random.default_rng(0)
    z = np.triu(rng.normal(0.0, 0.3, (sc.pop.n, sc.pop.n)))
    g = sc.g_true.g * np.exp(z + np.triu(z, 1).T)
    rep = prediction_report(g, 1.0, series, sc.pop, range(10, 40))
    assert len(rep.start_days) >= 20
    m = [rep.horizon_mape[h] for h in (1, 3, 5, 7)]
    assert all(a < b for a, b in zip(m, m[1:]))
    assert rep.per_zone.shape == (4, sc.pop.n)


def test_report_needs_room_for_horizon(noisy_scenario):
    sc, series, _ = noisy_scenario
    with pytest.raises(InvalidSeries):
        prediction_report(sc.g_true, 1.0, series, sc.pop, [series.t], (1,))


def test_report_csv(tmp_path, noisy_scenario):
    sc, series, _ = noisy_scenario
    rep = prediction_report(sc.g_true, 1.0, series, sc.pop, range(10, 20), (3, 1))
    rep.write_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "metric,horizon,value"
    assert [ln.split(",")[1] for ln in lines[1:]] == ["1", "3"]


def test_comparison_with_true_network(small_scenario):
    sc, series, _ = small_scenario
    c = simulate_comparison(sc.g_true, sc.g_true, series, sc.pop, warmup=10)
    np.testing.assert_allclose(c.d2pri, c.actual, rtol=1e-6)
    np.testing.assert_array_equal(c.d2pri, c.basic)
    assert c.sir.shape == c.actual.shape


def test_comparison_zero_warmup_infections():
    pop = Metapopulation(("a", "b"), np.array([100.0, 100.0]))
    s = OutbreakSeries(np.zeros((20, 2)), 0.2)
    g = np.full((2, 2), 1e-3)
    c = simulate_comparison(g, g, s, pop, warmup=10)
    for name in c.names:
        assert not getattr(c, name).any()


def test_single_population_sir_runs_fast_on_modular_city():
    from metanet.synthetic import make_scenario

    sc = make_scenario(40, seed=1, modular=True)
    rng = np.random.default_rng(1)
    s = seeded_outbreak(sc, 150, rng=rng, choices=10)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        c = simulate_comparison(sc.g_true, sc.g_true, s, sc.pop, warmup=10)
    (d_sir, h_sir), (d_act, h_act) = c.peak("sir"), c.peak("actual")
    assert d_sir < d_act and h_sir > h_act


def test_degree_fit_scale_invariant():
    pop = generate_metapopulation(200, seed=2)
    g = infection_network(generate_scale_free_mobility(pop, 3, seed=2), pop, 1e-5)
    a, b = degree_distribution(g), degree_distribution(10 * g.g)
    assert a.exponent == pytest.approx(b.exponent, rel=1e-9)
    assert a.residual == pytest.approx(b.residual, abs=1e-9)


def test_degree_fit_uniform_network():
    with pytest.raises(InsufficientSupport):
        degree_distribution(np.ones((6, 6)))


def test_power_law_fit_recovers_known_slope():
    rng = np.random.default_rng(3)
    x = (1.0 - rng.random(200_000)) ** (-1.0 / 1.5)  # Pareto density exponent 2.5
    fit = fit_power_law(x, 12)
    assert fit.exponent == pytest.approx(2.5, abs=0.1)


def _eig_pagerank(g, d=0.85):
    n = g.shape[0]
    m = g / g.sum(axis=0)
    full = d * m + (1 - d) / n
    vals, vecs = np.linalg.eig(full)
    p = np.real(vecs[:, np.argmax(np.real(vals))])
    return p / p.sum()


def test_pagerank_star_against_eigenvector():
    g = np.zeros((5, 5))
    g[0, 1:] = g[1:, 0] = 1.0
    p = pagerank_importance(g)
    np.testing.assert_allclose(p, _eig_pagerank(g), atol=1e-9)
    assert np.argmax(p) == 0 and p[0] > p[1:].max()


def test_pagerank_uniform_and_normalized():
    np.testing.assert_allclose(pagerank_importance(np.ones((4, 4))), 0.25, atol=1e-12)
    rng = np.random.default_rng(4)
    g = rng.random((6, 6))
    g[:, 2] = 0.0  # dangling column
    assert pagerank_importance(g).sum() == pytest.approx(1.0, abs=1e-9)
    with pytest.raises(ZeroNetwork):
        pagerank_importance(np.zeros((3, 3)))


def test_infection_count_importance():
    s = OutbreakSeries(np.array([[10.0, 20.0, 30.0]]), 0.2)
    np.testing.assert_allclose(infection_count_importance(s), [1 / 6, 2 / 6, 3 / 6], rtol=1e-15)
    one = OutbreakSeries(np.array([[0.0, 4.0], [0.0, 1.0]]), 0.2)
    np.testing.assert_array_equal(infection_count_importance(one), [0.0, 1.0])
    with pytest.raises(AllZeroActuals):
        infection_count_importance(OutbreakSeries(np.zeros((2, 2)), 0.2))
