import numpy as np
import pytest

from bqselect.baselines import (
    BridgeResult,
    ChainConfig,
    bridge_sampling,
    posterior_mcmc,
    rjmcmc,
    smc_evidence,
)
from bqselect.errors import EvaluationError
from bqselect.priors import DiagonalGaussianPrior
from bqselect.selection import ModelSpec

PRIOR_STD = DiagonalGaussianPrior([0.0], [1.0])

# conjugate reference: N(0,1) prior on a location, one observation y=0 with
# unit noise; evidence = N(0; 0, 2) = 1/sqrt(4 pi), posterior = N(0, 1/2)
CONJUGATE_EVIDENCE = 1.0 / np.sqrt(4.0 * np.pi)


def _conjugate_model():
    return ModelSpec(
        name="conjugate",
        dim=1,
        prior=PRIOR_STD,
        log_likelihood=lambda t: float(-0.5 * t[0] ** 2 - 0.5 * np.log(2 * np.pi)),
    )


def _constant_model(log_c=1.3):
    return ModelSpec("const", 1, PRIOR_STD, lambda t, c=log_c: float(c))


class TestSmcEvidence:
    def test_constant_likelihood_is_exact_with_zero_se(self):
        log_z, se = smc_evidence(_constant_model(1.3), 500, seed=0)
        assert log_z == pytest.approx(1.3, abs=1e-12)
        assert se == pytest.approx(0.0, abs=1e-12)

    def test_conjugate_evidence_within_3_se(self):
        log_z, se = smc_evidence(_conjugate_model(), 100_000, seed=1)
        assert log_z == pytest.approx(np.log(CONJUGATE_EVIDENCE), abs=3 * se)
        assert np.log(CONJUGATE_EVIDENCE) == pytest.approx(-1.2655, abs=5e-5)

    def test_doubling_n_shrinks_se_by_about_sqrt2(self):
        # average the reported SE over repeats so the ratio is stable
        ses_n = [smc_evidence(_conjugate_model(), 5_000, seed=s)[1] for s in range(8)]
        ses_2n = [smc_evidence(_conjugate_model(), 10_000, seed=100 + s)[1] for s in range(8)]
        ratio = np.mean(ses_2n) / np.mean(ses_n)
        assert ratio == pytest.approx(1 / np.sqrt(2), abs=0.08)

    def test_all_non_finite_draws_error(self):
        bad = ModelSpec("bad", 1, PRIOR_STD, lambda t: float("-inf"))
        with pytest.raises(EvaluationError):
            smc_evidence(bad, 100, seed=2)

    def test_deterministic_given_seed(self):
        a = smc_evidence(_conjugate_model(), 2_000, seed=3)
        b = smc_evidence(_conjugate_model(), 2_000, seed=3)
        assert a == b


class TestPosteriorMcmc:
    def test_conjugate_posterior_moments(self):
        cfg = ChainConfig(n_iterations=30_000, burn_in=5_000, proposal_scales=np.array([1.0]),
                          seed=0)
        samples = posterior_mcmc(_conjugate_model(), cfg)
        # effective sample size is well below n; use a generous band
        assert samples.mean() == pytest.approx(0.0, abs=0.05)
        assert samples.var() == pytest.approx(0.5, abs=0.05)

    def test_constant_likelihood_recovers_prior(self):
        cfg = ChainConfig(n_iterations=40_000, burn_in=5_000, proposal_scales=np.array([2.0]),
                          seed=1)
        samples = posterior_mcmc(_constant_model(), cfg)
        assert samples.mean() == pytest.approx(0.0, abs=0.06)
        assert samples.var() == pytest.approx(1.0, abs=0.08)

    def test_seed_determinism(self):
        cfg = ChainConfig(n_iterations=2_000, burn_in=200, proposal_scales=np.array([1.0]), seed=7)
        a = posterior_mcmc(_conjugate_model(), cfg)
        b = posterior_mcmc(_conjugate_model(), cfg)
        np.testing.assert_array_equal(a, b)

    def test_detailed_balance_spot_check(self):
        # coarse-bin transition counts of a reversible chain in stationarity
        # must be symmetric within sampling noise
        cfg = ChainConfig(n_iterations=120_000, burn_in=10_000, proposal_scales=np.array([0.9]),
                          seed=3)
        samples = posterior_mcmc(_conjugate_model(), cfg)[:, 0]
        edges = np.quantile(samples, np.linspace(0, 1, 7)[1:-1])
        bins = np.digitize(samples, edges)
        counts = np.zeros((6, 6))
        np.add.at(counts, (bins[:-1], bins[1:]), 1)
        for i in range(6):
            for j in range(i + 1, 6):
                n_ij, n_ji = counts[i, j], counts[j, i]
                if n_ij + n_ji >= 20:
                    z = abs(n_ij - n_ji) / np.sqrt(n_ij + n_ji)
                    assert z < 5.0

    def test_warns_on_extreme_acceptance(self):
        cfg = ChainConfig(n_iterations=3_000, burn_in=100, proposal_scales=np.array([200.0]),
                          seed=4)
        peaked = ModelSpec("peaked", 1, PRIOR_STD, lambda t: float(-5e4 * (t[0] - 0.2) ** 2))
        with pytest.warns(RuntimeWarning, match="acceptance"):
            posterior_mcmc(peaked, cfg)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ChainConfig(n_iterations=10, burn_in=10, proposal_scales=np.array([1.0]))
        with pytest.raises(ValueError):
            ChainConfig(n_iterations=10, burn_in=2, proposal_scales=np.array([-1.0]))


class TestBridgeSampling:
    def _posterior_samples(self, n, seed):
        rng = np.random.default_rng(seed)
        return rng.normal(0.0, np.sqrt(0.5), size=(n, 1))

    def test_conjugate_log_evidence_within_002(self):
        samples = self._posterior_samples(20_000, 0)
        res = bridge_sampling(_conjugate_model(), samples, n_proposal=10_000, seed=1)
        assert res.converged
        assert abs(res.log_evidence - np.log(CONJUGATE_EVIDENCE)) <= 0.02

    def test_constant_ratio_converges_immediately(self):
        # likelihood == const: the unnormalized posterior is prior * c, and
        # the fitted proposal is near the prior, so the bridge ratio is flat
        samples = np.random.default_rng(2).normal(size=(4_000, 1))
        res = bridge_sampling(_constant_model(0.7), samples, n_proposal=2_000, seed=3)
        assert res.converged
        assert res.iterations_to_converge <= 3
        assert res.log_evidence == pytest.approx(0.7, abs=0.05)

    def test_tightening_tol_respects_fixed_point_contract(self):
        samples = self._posterior_samples(4_000, 4)
        loose = bridge_sampling(_conjugate_model(), samples, n_proposal=2_000, tol=1e-6, seed=5)
        tight = bridge_sampling(_conjugate_model(), samples, n_proposal=2_000, tol=5e-7, seed=5)
        assert abs(tight.log_evidence - loose.log_evidence) <= max(
            loose.relative_change_at_stop, 1e-12
        ) * 2
        assert tight.relative_change_at_stop <= loose.relative_change_at_stop

    def test_minimum_sample_guard(self):
        samples = self._posterior_samples(50, 6)
        with pytest.raises(ValueError, match="at least 100"):
            bridge_sampling(_conjugate_model(), samples, n_proposal=100)
        res = bridge_sampling(
            _conjugate_model(), samples, n_proposal=100, seed=7, min_posterior_samples=10
        )
        assert isinstance(res, BridgeResult)

    def test_deterministic_given_seed(self):
        samples = self._posterior_samples(2_000, 8)
        a = bridge_sampling(_conjugate_model(), samples, n_proposal=1_000, seed=9)
        b = bridge_sampling(_conjugate_model(), samples, n_proposal=1_000, seed=9)
        assert a == b


class TestRjmcmc:
    def test_identical_likelihoods_occupy_half(self):
        pair = (_conjugate_model(), _conjugate_model())
        cfg = ChainConfig(n_iterations=100_000, burn_in=10_000, proposal_scales=np.array([1.2]),
                          seed=0)
        z1, diag = rjmcmc(pair, cfg, jump_prob=0.25)
        assert z1 == pytest.approx(0.5, abs=0.02)
        assert not diag.warnings

    def test_half_likelihood_gives_two_thirds(self):
        base = _conjugate_model()
        halved = ModelSpec(
            "halved", 1, PRIOR_STD,
            log_likelihood=lambda t: float(-0.5 * t[0] ** 2 - 0.5 * np.log(2 * np.pi) - np.log(2)),
        )
        cfg = ChainConfig(n_iterations=100_000, burn_in=10_000, proposal_scales=np.array([1.2]),
                          seed=1)
        z1, _ = rjmcmc((base, halved), cfg, jump_prob=0.3)
        # evidences are Z and Z/2, so the occupancy of model 1 tends to 2/3
        assert z1 == pytest.approx(2.0 / 3.0, abs=0.02)

    def test_zero_jump_probability_warns_and_pins_occupancy(self):
        pair = (_conjugate_model(), _constant_model())
        cfg = ChainConfig(n_iterations=3_000, burn_in=300, proposal_scales=np.array([1.0]),
                          seed=2)
        with pytest.warns(RuntimeWarning, match="non_mixing"):
            z1, diag = rjmcmc(pair, cfg, jump_prob=0.0)
        assert z1 in (0.0, 1.0)
        assert diag.switch_attempts == 0
        assert "non_mixing" in diag.warnings[0]

    def test_jump_probability_validation(self):
        pair = (_conjugate_model(), _conjugate_model())
        cfg = ChainConfig(n_iterations=100, burn_in=10, proposal_scales=np.array([1.0]))
        with pytest.raises(ValueError):
            rjmcmc(pair, cfg, jump_prob=1.0)
        with pytest.raises(ValueError):
            rjmcmc(pair, cfg, jump_prob=-0.1)

    def test_unequal_dimensions_need_explicit_flag(self):
        prior2 = DiagonalGaussianPrior([0.0, 0.0], [1.0, 1.0])
        two = ModelSpec("two", 2, prior2, lambda t: float(-0.5 * (t**2).sum()))
        cfg = ChainConfig(n_iterations=5_000, burn_in=500, proposal_scales=np.array([1.0]), seed=3)
        with pytest.raises(ValueError, match="transdimensional"):
            rjmcmc((_conjugate_model(), two), cfg)
        z1, _ = rjmcmc((_conjugate_model(), two), cfg, allow_transdimensional=True)
        assert 0.0 <= z1 <= 1.0

    def test_seed_determinism(self):
        pair = (_conjugate_model(), _constant_model())
        cfg = ChainConfig(n_iterations=4_000, burn_in=400, proposal_scales=np.array([1.0]), seed=5)
        a, da = rjmcmc(pair, cfg)
        b, db = rjmcmc(pair, cfg)
        assert a == b
        np.testing.assert_array_equal(da.model_trace, db.model_trace)


class TestCrossEstimatorConsistency:
    def test_bridge_and_smc_agree_on_conjugate_model(self):
        log_smc, se = smc_evidence(_conjugate_model(), 100_000, seed=10)
        samples = np.random.default_rng(11).normal(0, np.sqrt(0.5), size=(10_000, 1))
        res = bridge_sampling(_conjugate_model(), samples, n_proposal=5_000, seed=12)
        assert abs(res.log_evidence - log_smc) <= 3 * se + 0.02
