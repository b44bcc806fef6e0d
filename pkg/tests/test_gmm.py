import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from rlrestore import gmm as G
from rlrestore.gmm import FitConfig, Gmm, GmmError


def random_spd(rng, d, scale=1.0):
    a = rng.normal(size=(d, d))
    return scale * (a @ a.T / d + 0.2 * np.eye(d))


def random_gmm(rng, m, d, spread=2.0):
    w = rng.dirichlet(np.ones(m) * 2)
    mu = rng.normal(scale=spread, size=(m, d))
    cov = np.array([random_spd(rng, d) for _ in range(m)])
    return Gmm(w, mu, cov)


def gaussian_condition(mu, cov, obs_idx, y):
    """Textbook Gaussian conditioning with an explicit inverse."""
    rest = [i for i in range(len(mu)) if i not in obs_idx]
    s_zz = cov[np.ix_(rest, rest)]
    s_zy = cov[np.ix_(rest, obs_idx)]
    s_yy_inv = np.linalg.inv(cov[np.ix_(obs_idx, obs_idx)])
    m = mu[rest] + s_zy @ s_yy_inv @ (np.asarray(y) - mu[obs_idx])
    c = s_zz - s_zy @ s_yy_inv @ s_zy.T
    return m, c


@st.composite
def mixtures(draw, max_m=3, max_d=3):
    seed = draw(st.integers(0, 2**31 - 1))
    m = draw(st.integers(1, max_m))
    d = draw(st.integers(1, max_d))
    return random_gmm(np.random.default_rng(seed), m, d)


# --- construction and serialization -------------------------------------


def test_rejects_bad_parameters():
    with pytest.raises(GmmError):
        Gmm(np.array([1.0, -0.1]), np.zeros((2, 1)), np.ones((2, 1, 1)))
    with pytest.raises(GmmError):
        Gmm(np.ones(1), np.zeros((1, 2)), np.array([[[1.0, 0.5], [0.4, 1.0]]]))
    with pytest.raises(GmmError):
        Gmm(np.ones(1), np.zeros((1, 2)), np.ones((1, 3, 3)))
    with pytest.raises(GmmError):
        Gmm(np.array([]), np.zeros((0, 1)), np.zeros((0, 1, 1)))


def test_weights_renormalized_and_frozen():
    g = Gmm(np.array([2.0, 2.0]), np.zeros((2, 1)), np.ones((2, 1, 1)))
    assert abs(g.weights.sum() - 1) < 1e-12
    with pytest.raises(ValueError):
        g.means[0, 0] = 1.0


def test_json_roundtrip_bit_exact(tmp_path):
    g = random_gmm(np.random.default_rng(3), 3, 4)
    doc = json.loads(g.to_json())
    assert doc["dim"] == 4 and len(doc["components"]) == 3
    path = tmp_path / "g.json"
    g.save(path)
    h = Gmm.load(path)
    assert np.array_equal(g.weights, h.weights)
    assert np.array_equal(g.means, h.means)
    assert np.array_equal(g.covs, h.covs)


# --- density and likelihood ---------------------------------------------


def test_density_closed_forms():
    assert G.density(Gmm.single([0.0], [[1.0]]), [0.0]) == pytest.approx(0.39894228, abs=1e-8)
    g = Gmm(np.array([0.5, 0.5]), np.array([[-1.0], [1.0]]), np.ones((2, 1, 1)))
    assert G.density(g, [0.0]) == pytest.approx(0.24197072, abs=1e-8)


def test_density_matches_scipy():
    rng = np.random.default_rng(0)
    g = random_gmm(rng, 3, 4)
    x = rng.normal(size=(20, 4))
    ref = sum(w * stats.multivariate_normal(m, c).pdf(x) for w, m, c in zip(g.weights, g.means, g.covs))
    np.testing.assert_allclose([G.density(g, xi) for xi in x], ref, rtol=1e-10)


def test_density_integrates_to_one():
    rng = np.random.default_rng(1)
    g = random_gmm(rng, 2, 2, spread=1.0)
    grid = np.linspace(-14, 14, 561)
    xx, yy = np.meshgrid(grid, grid, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    dens = np.exp(G.logpdf(g, pts)).reshape(xx.shape)
    total = integrate.trapezoid(integrate.trapezoid(dens, grid, axis=1), grid)
    assert total == pytest.approx(1.0, abs=1e-3)


def test_density_dimension_mismatch():
    with pytest.raises(GmmError):
        G.density(Gmm.single([0.0, 0.0], np.eye(2)), [0.0])


def test_log_likelihood_examples():
    g = Gmm.single([0.0], [[1.0]])
    assert G.log_likelihood(g, [[0.0]]) == pytest.approx(-0.9189385, abs=1e-7)
    data = np.random.default_rng(2).normal(size=(50, 1))
    assert G.log_likelihood(g, np.vstack([data, data])) == pytest.approx(2 * G.log_likelihood(g, data), rel=1e-14)


def test_logpdf_survives_high_dimension_underflow():
    d = 30
    g = Gmm.single(np.zeros(d), 1e-4 * np.eye(d))
    lp = G.logpdf(g, np.full((1, d), 0.5))[0]
    assert np.isfinite(lp) and lp < -1000


# --- fitting ------------------------------------------------------------


def test_fit_single_component_is_mle():
    x = np.random.default_rng(4).normal(size=(300, 3)) @ np.array([[1, 0.3, 0], [0, 1, 0.2], [0, 0, 0.5]])
    g = G.fit(x, 1)
    np.testing.assert_allclose(g.means[0], x.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(g.covs[0], np.cov(x.T, bias=True), atol=1e-12)
    assert g.weights[0] == 1.0


def test_fit_recovers_two_component_mixture():
    truth = Gmm(np.array([0.4, 0.6]), np.array([[1.0], [2.0]]), np.full((2, 1, 1), 0.04))
    x = G.sample(truth, 5000, seed=5)
    g = G.fit(x, 2, FitConfig(seed=1))
    order = np.argsort(g.means[:, 0])
    np.testing.assert_allclose(g.weights[order], [0.4, 0.6], rtol=0.05)
    np.testing.assert_allclose(g.means[order, 0], [1.0, 2.0], rtol=0.05)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(1, 4))
def test_em_trace_never_decreases(seed, m):
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(size=(60, 2)), rng.normal(loc=3, size=(40, 2))])
    res = G.fit_em(x, m, FitConfig(seed=seed))
    assert np.all(np.diff(res.trace) >= -1e-9)
    assert res.gmm.n_components <= m


def test_em_initialized_from_single_gaussian_improves_likelihood():
    rng = np.random.default_rng(6)
    x = np.concatenate([rng.normal(-2, 0.5, 400), rng.normal(2, 0.7, 600)])[:, None]
    g1 = G.fit(x, 1)
    g2 = G.fit(x, 2, FitConfig(init=g1))
    assert G.log_likelihood(g2, x) >= G.log_likelihood(g1, x)


def test_degenerate_dataset():
    x = np.ones((20, 2))
    with pytest.raises(G.DegenerateFitError):
        G.fit(x, 2)
    with pytest.raises(GmmError):
        G.fit(np.ones((2, 2)), 3)


# --- conditioning -------------------------------------------------------


def test_condition_closed_form_example():
    g = Gmm.single([0.0, 0.0], [[1.0, 0.5], [0.5, 1.0]])
    c = G.condition(g, [0], [1.0])
    assert c.dim == 1
    assert c.means[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert c.covs[0, 0, 0] == pytest.approx(0.75, abs=1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_condition_matches_textbook_gaussian(seed):
    rng = np.random.default_rng(seed)
    mu = rng.normal(size=4)
    cov = random_spd(rng, 4)
    obs = sorted(rng.choice(4, size=2, replace=False).tolist())
    y = rng.normal(size=2)
    c = G.condition(Gmm.single(mu, cov), obs, y)
    m_ref, c_ref = gaussian_condition(mu, cov, obs, y)
    np.testing.assert_allclose(c.means[0], m_ref, atol=1e-10)
    np.testing.assert_allclose(c.covs[0], c_ref, atol=1e-10)
    # Schur complement never inflates a variance
    assert np.all(np.diag(c.covs[0]) <= np.diag(cov)[[i for i in range(4) if i not in obs]] + 1e-12)


def test_condition_weights_follow_observed_likelihood():
    rng = np.random.default_rng(7)
    g = random_gmm(rng, 3, 3)
    y = [0.3]
    c = G.condition(g, [1], y)
    lik = np.array([w * stats.norm(m[1], math.sqrt(s[1, 1])).pdf(0.3) for w, m, s in zip(g.weights, g.means, g.covs)])
    np.testing.assert_allclose(c.weights, lik / lik.sum(), rtol=1e-9)


def test_condition_independent_block_returns_marginal():
    cov = np.zeros((2, 3, 3))
    cov[0] = np.diag([1.0, 2.0, 3.0])
    cov[1] = np.diag([1.0, 0.5, 0.2])
    cov[1, 1, 2] = cov[1, 2, 1] = 0.1
    mu = np.array([[0.5, 1.0, 2.0], [0.5, -1.0, 0.0]])
    g = Gmm(np.array([0.3, 0.7]), mu, cov)
    c = G.condition(g, [0], [2.0])
    m = G.marginal(g, [1, 2])
    np.testing.assert_allclose(c.weights, m.weights, atol=1e-12)
    np.testing.assert_allclose(c.means, m.means, atol=1e-12)
    np.testing.assert_allclose(c.covs, m.covs, atol=1e-12)


def test_condition_errors():
    g = Gmm.single([0.0, 0.0], np.eye(2))
    with pytest.raises(GmmError):
        G.condition(g, [0, 1], [0.0, 0.0])
    with pytest.raises(GmmError):
        G.condition(g, [0, 0], [0.0, 0.0])
    with pytest.raises(GmmError):
        G.condition(g, [0], [0.0, 1.0])


def test_condition_far_outside_support_warns_and_hard_assigns():
    g = Gmm(np.array([0.5, 0.5]), np.array([[0.0, 0.0], [10.0, 10.0]]), np.array([np.eye(2) * 1e-3] * 2))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        c = G.condition(g, [0], [1e4])
    assert any(issubclass(r.category, RuntimeWarning) for r in rec)
    assert c.n_components == 1
    assert np.all(np.isfinite(c.means))


@settings(max_examples=30, deadline=None)
@given(g=mixtures(max_d=4), y=st.floats(-3, 3))
def test_condition_closure(g, y):
    if g.dim < 2:
        return
    c = G.condition(g, [0], [y])
    assert abs(c.weights.sum() - 1) <= 1e-12
    assert np.allclose(c.covs, c.covs.transpose(0, 2, 1), atol=1e-12)
    assert c.dim == g.dim - 1


# --- linear maps, marginals, moments ------------------------------------


def test_linear_map_identity_and_sum():
    g = random_gmm(np.random.default_rng(8), 2, 3)
    h = G.linear_map(g, np.eye(3))
    assert np.array_equal(h.means, g.means) and np.array_equal(h.covs, g.covs)
    s = G.linear_map(Gmm.single([0.0, 0.0], np.eye(2)), np.ones((1, 2)))
    assert s.means[0, 0] == 0 and s.covs[0, 0, 0] == pytest.approx(2.0)


def test_linear_map_dimension_checks():
    g = Gmm.single([0.0, 0.0], np.eye(2))
    with pytest.raises(GmmError):
        G.linear_map(g, np.ones((1, 3)))
    with pytest.raises(GmmError):
        G.linear_map(g, np.ones((1, 2)), np.zeros(2))


def test_marginal_is_selection_map():
    g = random_gmm(np.random.default_rng(9), 3, 4)
    idx = [2, 0]
    m = G.marginal(g, idx)
    e = G.linear_map(g, G.selection_matrix(4, idx))
    np.testing.assert_allclose(m.means, e.means, atol=1e-14)
    np.testing.assert_allclose(m.covs, e.covs, atol=1e-14)
    full = G.marginal(g, range(4))
    assert np.array_equal(full.means, g.means)
    with pytest.raises(GmmError):
        G.marginal(g, [])
    single = G.marginal(Gmm.single([1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]]), [0])
    assert single.means[0, 0] == 1.0 and single.covs[0, 0, 0] == 2.0


def test_moments_examples():
    g = Gmm(np.array([0.4, 0.6]), np.array([[1.0], [2.0]]), np.full((2, 1, 1), 0.5))
    mu, cov = G.moments(g)
    assert mu[0] == pytest.approx(1.6)
    assert cov[0, 0] == pytest.approx(0.5 + 0.4 * 0.6)
    s = Gmm.single([1.0, -1.0], [[2.0, 0.1], [0.1, 1.0]])
    mu, cov = G.moments(s)
    assert np.array_equal(mu, s.means[0]) and np.allclose(cov, s.covs[0])


@settings(max_examples=30, deadline=None)
@given(g=mixtures(), seed=st.integers(0, 1000))
def test_tower_consistency(g, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(2, g.dim))
    c = rng.normal(size=2)
    lhs = G.mean(G.linear_map(g, a, c))
    np.testing.assert_allclose(lhs, a @ G.mean(g) + c, atol=1e-12)


def test_moments_match_monte_carlo():
    g = random_gmm(np.random.default_rng(10), 3, 3)
    x = G.sample(g, 100_000, seed=11)
    mu, cov = G.moments(g)
    np.testing.assert_allclose(x.mean(axis=0), mu, rtol=0.02, atol=0.02)
    np.testing.assert_allclose(np.cov(x.T), cov, rtol=0.02, atol=0.02)


# --- univariate cdf / quantile ------------------------------------------


def test_cdf_examples():
    n = Gmm.single([0.0], [[1.0]])
    assert G.cdf1(n, 0.0) == pytest.approx(0.5, abs=1e-15)
    assert G.cdf1(n, 1.2815516) == pytest.approx(0.9, abs=1e-6)
    sym = Gmm(np.array([0.5, 0.5]), np.array([[-2.0], [2.0]]), np.ones((2, 1, 1)))
    assert G.cdf1(sym, 0.0) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(GmmError):
        G.cdf1(Gmm.single([0.0, 0.0], np.eye(2)), 0.0)


def test_quantile_examples():
    n = Gmm.single([0.0], [[1.0]])
    assert abs(G.quantile1(n, 0.5)) < 1e-9
    assert G.quantile1(n, 0.1) == pytest.approx(-1.2815516, abs=1e-6)
    for p in (0.0, 1.0, -0.1, 1.5):
        with pytest.raises(GmmError):
            G.quantile1(n, p)


@settings(max_examples=25, deadline=None)
@given(g=mixtures(max_m=4, max_d=1))
def test_quantile_cdf_roundtrip(g):
    prev = -np.inf
    for p in np.arange(1, 100) / 100:
        q = G.quantile1(g, p)
        assert abs(G.cdf1(g, q) - p) < 1e-8
        assert q >= prev
        prev = q


def test_zero_variance_quantile_is_the_point():
    g = Gmm.single([1.25], [[0.0]])
    assert G.quantile1(g, 0.1) == pytest.approx(1.25, abs=1e-9)


# --- sampling and jitter ------------------------------------------------


def test_sample_determinism_and_occupancy():
    g = Gmm(np.array([0.3, 0.7]), np.array([[0.0], [5.0]]), np.ones((2, 1, 1)))
    a = G.sample(g, 1000, seed=3)
    assert np.array_equal(a, G.sample(g, 1000, seed=3))
    _, labels = G.sample(g, 100_000, seed=4, return_labels=True)
    assert np.mean(labels == 0) == pytest.approx(0.3, abs=0.01)


def test_sample_mean_within_clt_bound():
    mu = np.array([1.0, -2.0, 0.5])
    cov = random_spd(np.random.default_rng(12), 3)
    x = G.sample(Gmm.single(mu, cov), 100_000, seed=13)
    assert np.all(np.abs(x.mean(axis=0) - mu) < 3 * np.sqrt(np.diag(cov) / 100_000))


def test_safe_cholesky_jitters_only_when_needed():
    spd = random_spd(np.random.default_rng(14), 3)
    np.testing.assert_allclose(G.safe_cholesky(spd), np.linalg.cholesky(spd))
    singular = np.ones((3, 3))
    L = G.safe_cholesky(singular)
    assert np.all(np.isfinite(L))
    assert np.abs(L @ L.T - singular).max() < 1e-5
    with pytest.raises(GmmError):
        G.safe_cholesky(-np.eye(2))
