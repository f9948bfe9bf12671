import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bqselect.gp import gp_condition
from bqselect.kernels import MATERN32, SQUARED_EXPONENTIAL, Kernel
from bqselect.warp import LinearSurrogate, warp_moment_match

SE_UNIT = Kernel(SQUARED_EXPONENTIAL, 1.0, [1.0])


def _warped_from_data(seed=0, n=6, family=MATERN32):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, 1))
    y = rng.normal(size=n)
    kern = Kernel(family, float(rng.uniform(0.5, 2.0)), [float(rng.uniform(0.5, 2.0))])
    return warp_moment_match(gp_condition(kern, 0.0, X, y))


def test_fully_observed_log_gp_gives_exponentiated_mean_and_zero_cov():
    # at the data the latent variance is ~0, so mean == exp(latent mean)
    X = np.array([[0.0], [1.0]])
    y = np.array([0.3, -0.7])
    sur = warp_moment_match(gp_condition(SE_UNIT, 0.0, X, y))
    np.testing.assert_allclose(sur.mean(X), np.exp(y), rtol=1e-6)
    np.testing.assert_allclose(sur.var(X), 0.0, atol=1e-8)


def test_lognormal_moments_at_prior_point():
    # latent N(0, 1) at any unobserved-far point: mean = e^{1/2}, var = e(e-1)
    sur = warp_moment_match(gp_condition(SE_UNIT, 0.0, np.empty((0, 1)), np.empty(0)))
    T = np.array([[0.0]])
    assert sur.mean(T)[0] == pytest.approx(np.exp(0.5), rel=1e-12)
    assert sur.mean(T)[0] == pytest.approx(1.6487, abs=5e-5)
    assert sur.var(T)[0] == pytest.approx(np.e * (np.e - 1.0), rel=1e-12)
    assert sur.var(T)[0] == pytest.approx(4.6708, abs=5e-5)


def test_mean_is_positive_everywhere():
    sur = _warped_from_data(seed=1)
    T = np.linspace(-4, 4, 50)[:, None]
    assert np.all(sur.mean(T) > 0)


def test_cov_symmetry_on_random_pairs():
    sur = _warped_from_data(seed=2)
    rng = np.random.default_rng(3)
    T = rng.normal(size=(7, 1))
    C = sur.cov(T)
    np.testing.assert_allclose(C, C.T, rtol=1e-12)
    assert np.all(np.diag(C) >= 0)


def test_cov_cross_matches_elementwise_formula():
    sur = _warped_from_data(seed=4)
    T = np.array([[0.2], [1.5]])
    S = np.array([[-0.3]])
    g_t, v_t = sur.latent_moments(T)
    g_s, v_s = sur.latent_moments(S)
    C_ts = sur.log_gp.cov(T, S)
    expected = np.exp(g_t[:, None] + g_s[None, :] + 0.5 * (v_t[:, None] + v_s[None, :])) * (
        np.exp(C_ts) - 1.0
    )
    np.testing.assert_allclose(sur.cov(T, S), expected, rtol=1e-10)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-3, 3), seed=st.integers(0, 50))
def test_diagonal_matches_lognormal_variance_identity(x, seed):
    sur = _warped_from_data(seed=seed)
    T = np.array([[x]])
    g, v = sur.latent_moments(T)
    expected = np.exp(2 * g[0] + v[0]) * (np.exp(v[0]) - 1.0)
    assert sur.var(T)[0] == pytest.approx(expected, rel=1e-9, abs=1e-12)
    # the cov diagonal agrees with the dedicated variance path
    assert sur.cov(T)[0, 0] == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_log_var_consistent_with_var():
    sur = _warped_from_data(seed=5)
    T = np.linspace(-2, 2, 9)[:, None]
    np.testing.assert_allclose(np.exp(sur.log_var(T)), sur.var(T), rtol=1e-10)


def test_linear_surrogate_passes_through_gp_moments():
    gp = gp_condition(SE_UNIT, 0.1, np.array([[0.0]]), np.array([1.0]))
    sur = LinearSurrogate(gp, log_offset=2.0)
    T = np.array([[0.5]])
    assert sur.mean(T)[0] == gp.mean(T)[0]
    assert sur.var(T)[0] == gp.var(T)[0]
    assert sur.log_offset == 2.0
    assert sur.n_observations == 1
