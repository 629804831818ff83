import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from dck.core import DataError
from dck.simgen import (CovarianceError, CovarianceSpec, GaussianField, NoiseSpec, ScenarioConfig,
                        TukeyGH, add_noise, air_quality_like, cholesky_with_jitter, covariance_matrix,
                        covariance_value, nonlinear_mean, perturbed_grid, sample_gp, scenario,
                        tukey_gh)

BIV = CovarianceSpec.bivariate((0.2, 0.4), (0.8, 0.8), (math.sqrt(0.89), math.sqrt(1.3)), 0.8)


def test_perturbed_grid():
    assert perturbed_grid(40, 0.4, seed=1).shape == (1600, 2)
    corners = perturbed_grid(2, 0.0)
    assert {tuple(p) for p in corners} == {(0, 0), (0, 1), (1, 0), (1, 1)}
    np.testing.assert_array_equal(perturbed_grid(3, 0.1, seed=7), perturbed_grid(3, 0.1, seed=7))
    with pytest.raises(DataError):
        perturbed_grid(1, 0.0)
    with pytest.raises(DataError):
        perturbed_grid(3, -0.1)


def test_perturbed_grid_is_duplicate_free():
    pts = perturbed_grid(30, 0.4, seed=3)
    assert len(np.unique(pts, axis=0)) == len(pts)


def test_covariance_examples():
    assert covariance_value(CovarianceSpec.exponential(0.5), 0.0) == 1.0
    assert covariance_value(CovarianceSpec.matern(0.5, 0.2), 0.2) == pytest.approx(math.exp(-1), abs=1e-12)
    # zero-lag cross covariance: rho12 * sd1 * sd2 with sigma^2 = (0.89, 1.3)
    assert covariance_value(BIV, 0.0, (1, 2)) == pytest.approx(0.8 * math.sqrt(0.89 * 1.3), abs=1e-15)
    assert covariance_value(BIV, 0.0, (2, 2)) == pytest.approx(1.3)
    with pytest.raises(CovarianceError):
        covariance_value(BIV, 0.1, (1, 3))
    with pytest.raises(CovarianceError):
        covariance_value(CovarianceSpec.exponential(0.5), 0.1, (1, 2))


def test_parsimonious_cross_parameters():
    scale, nu, alpha = BIV.pair_params(1, 2)
    assert (nu, alpha) == (0.8, pytest.approx(0.3))
    assert scale == pytest.approx(0.8 * math.sqrt(0.89) * math.sqrt(1.3))


def test_matern_half_is_exponential(rng):
    d = rng.uniform(0, 3, 100)
    for a in (0.1, 0.5, 2.0):
        m = covariance_value(CovarianceSpec.matern(0.5, a), d)
        e = covariance_value(CovarianceSpec.exponential(a), d)
        np.testing.assert_allclose(m, e, rtol=0, atol=1e-12)


def test_bessel_k_half_closed_form():
    for x in (0.1, 1.0, 5.0):
        closed = math.sqrt(math.pi / (2 * x)) * math.exp(-x)
        assert special.kv(0.5, x) == pytest.approx(closed, rel=1e-10)


@pytest.mark.parametrize("nu", [0.3, 0.8, 1.7, 2.5])
def test_bessel_k_positive_decreasing(nu):
    x = np.linspace(0.01, 30, 2000)
    k = special.kv(nu, x)
    assert np.all(k > 0) and np.all(np.diff(k) < 0)


def test_covariance_matrix_symmetric_and_factorizable(rng):
    loc = perturbed_grid(12, 0.4, seed=rng)
    var = rng.integers(1, 3, len(loc))
    for spec, v in ((CovarianceSpec.exponential(0.5), None), (CovarianceSpec.matern(0.5, 0.2, 0.7), None),
                    (BIV, var)):
        k = covariance_matrix(spec, loc, None, v)
        assert np.max(np.abs(k - k.T)) <= 1e-12
        np.testing.assert_array_equal(k, covariance_matrix(spec, loc, loc, v, v))
        cholesky_with_jitter(k)


def test_cholesky_jitter_gives_up():
    with pytest.raises(CovarianceError):
        cholesky_with_jitter(np.array([[1.0, 0.0], [0.0, -1.0]]))


def test_sample_gp_unit_variance():
    spec = CovarianceSpec.exponential(0.5)
    draws = sample_gp(np.zeros((1, 2)), spec, seed=0)
    assert draws.shape == (1,)
    field = GaussianField(np.zeros((1, 2)), spec)
    rng = np.random.default_rng(11)
    v = np.array([field.sample(rng)[0] for _ in range(10_000)])
    assert 0.95 <= v.var() <= 1.05


def test_sample_gp_coincident_and_deterministic():
    loc = np.array([[0.3, 0.3], [0.3, 0.3], [0.9, 0.1]])
    y = sample_gp(loc, CovarianceSpec.exponential(0.5), seed=4)
    assert abs(y[0] - y[1]) < 1e-3
    np.testing.assert_array_equal(y, sample_gp(loc, CovarianceSpec.exponential(0.5), seed=4))


def test_sample_gp_budget():
    with pytest.raises(DataError, match="budget"):
        sample_gp(np.random.default_rng(0).random((5001, 2)), BIV, seed=0)


def test_bivariate_cross_correlation():
    loc = perturbed_grid(10, 0.05, seed=2)
    field = GaussianField(loc, BIV)
    rng = np.random.default_rng(5)
    y = np.stack([field.sample(rng) for _ in range(200)])   # (200, 100, 2)
    corr = np.mean([np.corrcoef(y[:, i, 0], y[:, i, 1])[0, 1] for i in range(len(loc))])
    target = 0.8 * BIV.sigma[0] * BIV.sigma[1] / math.sqrt(BIV.sigma[0] ** 2 * BIV.sigma[1] ** 2)
    assert abs(corr - target) <= 0.1


def test_tukey_examples():
    for g, h in ((0.5, 0.5), (0.0, 0.3), (-0.7, 0.0)):
        assert tukey_gh(0.0, TukeyGH(g, h)) == 0.0
    hand = (math.exp(0.5) - 1) / 0.5 * math.exp(0.25)
    assert tukey_gh(1.0, TukeyGH(0.5, 0.5)) == pytest.approx(hand, rel=1e-14)
    assert round(hand, 5) == 1.66595
    z = np.linspace(-3, 3, 11)
    np.testing.assert_array_equal(tukey_gh(z, TukeyGH(0.0, 0.0)), z)
    with pytest.raises(DataError):
        TukeyGH(0.5, -0.1)


@settings(max_examples=30, deadline=None)
@given(st.floats(-1, 1), st.floats(0, 1))
def test_tukey_monotone(g, h):
    z = np.linspace(-5, 5, 10_000)
    assert np.all(np.diff(tukey_gh(z, TukeyGH(g, h))) > 0)


def test_nonlinear_mean():
    assert nonlinear_mean(np.zeros(5)) == 0.0
    assert nonlinear_mean([1, 0, 0, 0, 0]) == 1.0
    assert nonlinear_mean([0, 1, 1, 0, 0]) == pytest.approx(3.0)
    assert nonlinear_mean(np.ones((4, 5))).shape == (4,)
    with pytest.raises(DataError, match="5 covariates"):
        nonlinear_mean([1, 2, 3])


def test_add_noise():
    v = np.arange(5.0)
    np.testing.assert_array_equal(add_noise(v, NoiseSpec(0.0), seed=1), v)
    noisy = add_noise(np.zeros(10_000), NoiseSpec(0.1), seed=2)
    assert 0.097 <= noisy.std() <= 0.103
    np.testing.assert_array_equal(add_noise(v, NoiseSpec(0.1), seed=3), add_noise(v, NoiseSpec(0.1), seed=3))
    with pytest.raises(DataError):
        NoiseSpec(-1.0)


def test_scenario_univariate():
    scn = scenario("uni_gauss", 1600, seed=0)
    assert scn.config.gamma == 0.5 and scn.config.side == 40
    assert len(scn.train) == 1440 and len(scn.test) == 160
    assert scn.config.covariance() == CovarianceSpec.exponential(0.5)
    tk = ScenarioConfig.preset("uni_tukey")
    assert (tk.tukey_g, tk.tukey_h) == (0.8, 0.5)
    small = scenario("uni_tukey", 400, seed=1)
    assert small.train.covariates.shape == (360, 5) and small.test.covariates.shape == (40, 5)


def test_scenario_bivariate_sizes():
    scn = scenario("bi_gauss", 3600, seed=0)
    assert scn.data.n1 == 500 and scn.data.n2 == 3500
    assert scn.test_locations.shape == (100, 2) and scn.test_truth.shape == (100, 2)
    # Z1 sites are a subset of the Z2 sites; test sites are disjoint from both
    s2 = {tuple(p) for p in scn.data.set2.locations}
    assert all(tuple(p) in s2 for p in scn.data.set1.locations)
    assert not any(tuple(p) in s2 for p in scn.test_locations)


def test_scenario_errors_and_overrides():
    with pytest.raises(DataError, match="unknown scenario"):
        scenario("tri_gauss")
    with pytest.raises(DataError, match="perfect square"):
        scenario("uni_gauss", 1000)
    assert ScenarioConfig.preset("uni_gauss", jitter=0.01).jitter == 0.01


def test_air_quality_like_shape():
    aq = air_quality_like(1000, 10_000, seed=0)
    assert aq.data.n1 == 1000 and aq.data.n2 == 10_000
    grid = np.array([[-100.0, 35.0], [-90.0, 40.0]])
    np.testing.assert_array_equal(aq.z2_surface(grid), aq.z2_surface(grid))
    # Z1 and Z2 share a latent field, so they correlate
    c = np.corrcoef(aq.y1_surface(aq.data.set2.locations), aq.data.set2.values)[0, 1]
    assert c > 0.5
