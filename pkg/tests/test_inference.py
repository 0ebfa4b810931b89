import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from conftest import random_states
from metanet import FeatureTensor, InferenceConfig, StateSeries, StepPolicy
from metanet.errors import Diverged, InvalidConfig, NoSignal
from metanet.features import build_feature_tensor, mode_k_product
from metanet.inference import (
    config_for_variant,
    fit_alpha_adjustment,
    grad_g,
    grad_w,
    inactive_weights_set,
    objective_full,
    objective_j1,
    spgd_infer,
)
from metanet.synthetic import scenario_features


def _sym(a):
    return (a + a.T) / 2.0


def test_j1_exact_fit_is_zero():
    rng = np.random.default_rng(0)
    g = _sym(rng.random((3, 3))) * 0.01
    v = rng.random((6, 3))
    st = StateSeries(v @ g.T, v)
    assert objective_j1(g, st) < 1e-30


def test_j1_zero_network():
    rng = np.random.default_rng(1)
    st = random_states(3, 5, rng)
    assert objective_j1(np.zeros((3, 3)), st) == pytest.approx(float(np.sum(st.u**2)), rel=1e-14)


def test_j1_scalar_by_hand():
    st = StateSeries(np.array([[0.1], [0.2]]), np.array([[1.0], [2.0]]))
    assert objective_j1(np.array([[0.1]]), st) == pytest.approx(0.0, abs=1e-30)


def test_j1_ignores_days_without_infectious_mass():
    st = StateSeries(np.array([[0.5, 0.0], [0.1, 0.1]]), np.array([[0.0, 0.0], [1.0, 1.0]]))
    g = np.full((2, 2), 0.05)
    assert objective_j1(g, st) == pytest.approx(0.0, abs=1e-30)


def test_full_objective_reductions():
    rng = np.random.default_rng(2)
    st = random_states(4, 5, rng)
    x = build_feature_tensor([rng.random((4, 4)), rng.random((4, 4))], ["a", "b"])
    g, w = _sym(rng.random((4, 4))), rng.random(2)
    assert objective_full(g, w, st, x, InferenceConfig()) == objective_j1(g, st)
    g_fit = mode_k_product(x, w)
    g_fit = _sym(g_fit)
    x_sym = FeatureTensor((x.x + x.x.transpose(1, 0, 2)) / 2, x.names)
    val = objective_full(g_fit, w, st, x_sym, InferenceConfig(eta=3.0))
    assert val == pytest.approx(objective_j1(g_fit, st), rel=1e-12)


def test_degree_term_vanishes_at_unit_degree():
    st = StateSeries(np.zeros((1, 2)), np.zeros((1, 2)))
    g = np.array([[0.0, 1.0], [1.0, 0.0]])
    val = objective_full(g, None, st, None, InferenceConfig(lam=1.0, epsilon_deg=1e-300))
    assert val == 0.0


def test_gradient_zero_at_perfect_fit(small_scenario):
    sc, _, st = small_scenario
    d = grad_g(sc.g_true, None, st, None, InferenceConfig())
    scale = np.abs(grad_g(np.zeros_like(sc.g_true.g), None, st, None, InferenceConfig())).max()
    assert np.abs(d).max() <= 1e-10 * scale


def test_degree_gradient_at_zero_network():
    st = StateSeries(np.zeros((2, 3)), np.ones((2, 3)))
    cfg = InferenceConfig(lam=2.0, epsilon_deg=1e-3)
    d = grad_g(np.zeros((3, 3)), None, st, None, cfg, symmetrize=False)
    off = ~np.eye(3, dtype=bool)
    np.testing.assert_allclose(d[off], 2.0 / 1e-3, rtol=1e-14)
    assert not np.diag(d).any()


def test_degree_penalty_weakens_with_degree():
    # Rich zones pay less for a new link: the prior favors hubs.
    st = StateSeries(np.zeros((1, 3)), np.zeros((1, 3)))
    cfg = InferenceConfig(lam=1.0)
    last = np.inf
    for deg in (0.1, 0.5, 1.0, 3.0):
        g = np.array([[0.0, 0.1, deg], [0.1, 0.0, 0.0], [deg, 0.0, 0.0]])
        pen = grad_g(g, None, st, None, cfg, symmetrize=False)[0, 1]
        assert pen < last
        last = pen


def _fd_problem(seed):
    rng = np.random.default_rng(seed)
    st = random_states(4, 8, rng)
    x = build_feature_tensor([rng.random((4, 4)) + 0.1 for _ in range(2)], ["a", "b"])
    g = 0.1 + rng.random((4, 4))
    w = 0.1 + rng.random(2)
    cfg = InferenceConfig(lam=0.5, eta=0.3, mu=0.2, l1=0.1, l2=0.05)
    return st, x, g, w, cfg


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    st, x, g, w, cfg = _fd_problem(seed)
    f = lambda g_, w_: objective_full(g_, w_, st, x, cfg)
    h = 1e-6
    fd_g = np.zeros_like(g)
    for idx in np.ndindex(g.shape):
        e = np.zeros_like(g)
        e[idx] = h
        fd_g[idx] = (f(g + e, w) - f(g - e, w)) / (2 * h)
    an_g = grad_g(g, w, st, x, cfg, symmetrize=False, include_l1=True)
    assert np.linalg.norm(fd_g - an_g) / np.linalg.norm(an_g) < 1e-5
    fd_w = np.array([(f(g, w + h * e) - f(g, w - h * e)) / (2 * h) for e in np.eye(2)])
    an_w = grad_w(g, w, x, cfg)
    assert np.linalg.norm(fd_w - an_w) / np.linalg.norm(an_w) < 1e-5


def test_weight_gradient_special_cases():
    rng = np.random.default_rng(3)
    x = build_feature_tensor([rng.random((3, 3)) for _ in range(2)], ["a", "b"])
    w = rng.random(2)
    g = mode_k_product(x, w)
    np.testing.assert_allclose(grad_w(g, w, x, InferenceConfig(eta=5.0)), 0.0, atol=1e-14)
    np.testing.assert_array_equal(grad_w(g, w, x, InferenceConfig(mu=0.7)), 1.4 * w)


def test_optimal_start_is_a_fixed_point(small_scenario):
    sc, _, st = small_scenario
    res = spgd_infer(st, variant="basic", g0=sc.g_true)
    assert res.iterations <= 2 and res.converged
    np.testing.assert_allclose(res.g.g, sc.g_true.g, rtol=1e-7, atol=1e-12)


def test_noise_free_recovery_small(small_scenario):
    sc, _, st = small_scenario
    res = spgd_infer(st, variant="basic")
    assert objective_j1(res.g, st) < 1e-8
    from metanet.evaluation import cosine_similarity
    assert cosine_similarity(res.g, sc.g_true) > 0.99


def _x_for(sc):
    return scenario_features(sc, seed=0)


def test_variant_reductions(noisy_scenario):
    sc, _, st = noisy_scenario
    x = _x_for(sc)
    cfg = InferenceConfig(max_iters=200, seed=4)
    base = spgd_infer(st, None, cfg, "basic")
    same = spgd_infer(st, x, cfg, "d2pri")
    np.testing.assert_array_equal(base.g.g, same.g.g)

    cfg_l = InferenceConfig(lam=1e-9, max_iters=200, seed=4)
    np.testing.assert_array_equal(spgd_infer(st, None, cfg_l, "plpri").g.g,
                                  spgd_infer(st, x, cfg_l, "d2pri").g.g)

    cfg_d = InferenceConfig(eta=1e3, mu=1.0, max_iters=200, seed=4)
    a, b = spgd_infer(st, x, cfg_d, "datpri"), spgd_infer(st, x, cfg_d, "d2pri")
    np.testing.assert_array_equal(a.g.g, b.g.g)
    np.testing.assert_array_equal(a.w, b.w)


def test_variant_zeroes_unused_weights():
    cfg = InferenceConfig(lam=1.0, eta=2.0, mu=3.0, l1=4.0, l2=5.0)
    assert config_for_variant(cfg, "plpri") == InferenceConfig(lam=1.0)
    assert inactive_weights_set(cfg, "basic") == ["lam", "eta", "mu", "l1", "l2"]
    with pytest.raises(InvalidConfig):
        config_for_variant(cfg, "nope")


def test_data_prior_needs_features(noisy_scenario):
    _, _, st = noisy_scenario
    with pytest.raises(InvalidConfig):
        spgd_infer(st, None, InferenceConfig(eta=1.0), "datpri")


@pytest.mark.parametrize("variant,kw", [
    ("basic", {}), ("plpri", {"lam": 1e-9}), ("datpri", {"eta": 1e3, "mu": 1.0}),
    ("l1pri", {"l1": 1e-6}), ("l2pri", {"l2": 1e3}), ("d2pri", {"lam": 1e-9, "eta": 1e3, "mu": 1.0}),
])
def test_every_variant_is_feasible_and_monotone(noisy_scenario, variant, kw):
    sc, _, st = noisy_scenario
    res = spgd_infer(st, _x_for(sc), InferenceConfig(max_iters=300, **kw), variant)
    g = res.g.g
    assert np.all(g >= 0) and np.array_equal(g, g.T)
    assert np.all(np.diff(res.objective_trace) <= 1e-12)
    if res.w is not None:
        assert np.all(res.w >= 0)


def test_plain_projected_gradient_path(noisy_scenario):
    _, _, st = noisy_scenario
    cfg = InferenceConfig(max_iters=300, step_policy=StepPolicy(refine=0))
    res = spgd_infer(st, None, cfg, "basic")
    assert np.all(np.diff(res.objective_trace) <= 1e-12)
    assert res.objective_trace[-1] < res.objective_trace[0]


def test_strong_l1_shrinks_network(noisy_scenario):
    _, _, st = noisy_scenario
    # The data curvature is of order sum(v^2) ~ 1e10 here, so the weight
    # must be large before soft thresholding bites.
    weak = spgd_infer(st, None, InferenceConfig(l1=1e-9, max_iters=300), "l1pri")
    strong = spgd_infer(st, None, InferenceConfig(l1=1e4, max_iters=300), "l1pri")
    assert strong.g.g.sum() < 0.9 * weak.g.g.sum()
    assert np.count_nonzero(strong.g.g) < np.count_nonzero(weak.g.g)
    huge = spgd_infer(st, None, InferenceConfig(l1=1e6, max_iters=300), "l1pri")
    assert not huge.g.g.any()


def test_fixed_step_too_large_diverges(noisy_scenario):
    _, _, st = noisy_scenario
    cfg = InferenceConfig(step_policy=StepPolicy(kind="fixed", step=1e3), max_iters=500)
    with pytest.raises(Diverged) as info:
        spgd_infer(st, None, cfg, "basic")
    assert len(info.value.trace) > 1


def test_alpha_exact_scaling():
    rng = np.random.default_rng(5)
    g = _sym(rng.random((3, 3))) * 0.01
    v = rng.random((5, 3))
    st = StateSeries(2.5 * v @ g.T, v)
    assert fit_alpha_adjustment(g, st) == pytest.approx(2.5, rel=1e-13)


def test_alpha_orthogonal_gives_zero():
    g = np.eye(2)
    st = StateSeries(np.array([[0.0, 0.3]]), np.array([[1.0, 0.0]]))
    assert fit_alpha_adjustment(g, st) == 0.0


def test_alpha_no_signal():
    st = StateSeries(np.array([[0.1, 0.1]]), np.zeros((1, 2)))
    with pytest.raises(NoSignal):
        fit_alpha_adjustment(np.eye(2), st)


def test_alpha_matches_golden_section():
    rng = np.random.default_rng(6)
    st = random_states(4, 10, rng)
    g = _sym(rng.random((4, 4)))
    a = fit_alpha_adjustment(g, st)
    pred = st.v @ g.T
    res = minimize_scalar(lambda c: float(np.sum((st.u - c * pred) ** 2)),
                          bracket=(0.0, 1.0), method="golden", tol=1e-12)
    assert a == pytest.approx(res.x, abs=1e-8)
