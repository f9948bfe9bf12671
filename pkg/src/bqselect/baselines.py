"""Monte Carlo baselines: prior-sample evidence, random-walk posterior
sampling, bridge sampling, and a two-model reversible-jump chain."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp

from .errors import EvaluationError
from .selection import ModelSpec

__all__ = [
    "ChainConfig",
    "smc_evidence",
    "posterior_mcmc",
    "BridgeResult",
    "bridge_sampling",
    "RjmcmcDiagnostics",
    "rjmcmc",
]

logger = logging.getLogger(__name__)

_TARGET_ACCEPTANCE = 0.3
_ADAPT_WINDOW = 50


def _batch_log_likelihood(model: ModelSpec, thetas: np.ndarray) -> np.ndarray:
    if model.log_likelihood_batch is not None:
        return np.asarray(model.log_likelihood_batch(thetas), dtype=float)
    return np.array([model.log_likelihood(t) for t in thetas], dtype=float)


def smc_evidence(model: ModelSpec, n: int, seed) -> tuple[float, float]:
    """Evidence by simple Monte Carlo over prior draws, in log space.

    Returns (log_evidence, standard_error_of_log_evidence); the standard
    error comes from the sample variance through the delta method on the
    log scale.
    """
    if n < 1:
        raise ValueError("need at least one prior draw")
    rng = np.random.default_rng(seed)
    thetas = model.prior.sample(n, rng)
    logs = _batch_log_likelihood(model, thetas)
    finite = np.isfinite(logs)
    if not np.any(finite):
        raise EvaluationError(f"model {model.name!r}: all {n} prior draws gave non-finite log-likelihoods")
    logs = np.where(finite, logs, -np.inf)
    log_mean = float(logsumexp(logs) - np.log(n))
    w = np.exp(logs - logs.max())
    mean_w = w.mean()
    se_log = float(w.std(ddof=1) / (np.sqrt(n) * mean_w)) if n > 1 else float("nan")
    return log_mean, se_log


@dataclass(frozen=True)
class ChainConfig:
    n_iterations: int
    burn_in: int
    proposal_scales: np.ndarray
    seed: int = 0
    thinning: int = 1

    def __post_init__(self):
        object.__setattr__(
            self, "proposal_scales", np.atleast_1d(np.asarray(self.proposal_scales, dtype=float))
        )
        if self.burn_in >= self.n_iterations:
            raise ValueError("burn_in must be smaller than n_iterations")
        if np.any(self.proposal_scales <= 0):
            raise ValueError("proposal scales must be positive")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")


def _log_target(model: ModelSpec, theta: np.ndarray) -> float:
    lp = float(model.prior.log_density(theta[None, :])[0])
    if not np.isfinite(lp):
        return -np.inf
    return lp + float(model.log_likelihood(theta))


def posterior_mcmc(model: ModelSpec, config: ChainConfig) -> np.ndarray:
    """Random-walk Metropolis samples from prior x likelihood.

    Proposal scales adapt toward 30% acceptance during burn-in and are
    frozen afterwards; a post-burn-in acceptance rate outside
    [0.05, 0.7] triggers a warning.  Deterministic given the seed.
    """
    rng = np.random.default_rng(config.seed)
    scales = config.proposal_scales.astype(float).copy()
    if scales.shape[0] == 1 and model.dim > 1:
        scales = np.full(model.dim, scales[0])
    theta = model.prior.sample(1, rng)[0]
    log_p = _log_target(model, theta)

    kept = []
    accepted_window = 0
    accepted_post = 0
    post_steps = 0
    for i in range(config.n_iterations):
        prop = theta + scales * rng.standard_normal(model.dim)
        log_q = _log_target(model, prop)
        if np.log(rng.random()) < log_q - log_p:
            theta, log_p = prop, log_q
            accepted_window += 1
            if i >= config.burn_in:
                accepted_post += 1
        if i >= config.burn_in:
            post_steps += 1
            if (i - config.burn_in) % config.thinning == 0:
                kept.append(theta.copy())
        elif (i + 1) % _ADAPT_WINDOW == 0:
            rate = accepted_window / _ADAPT_WINDOW
            scales *= np.exp(rate - _TARGET_ACCEPTANCE)
            accepted_window = 0

    rate_post = accepted_post / max(post_steps, 1)
    logger.debug("posterior_mcmc %s: post-burn-in acceptance %.3f", model.name, rate_post)
    if not 0.05 <= rate_post <= 0.7:
        warnings.warn(
            f"posterior_mcmc acceptance rate {rate_post:.3f} outside [0.05, 0.7]",
            RuntimeWarning,
            stacklevel=2,
        )
    return np.asarray(kept)


@dataclass(frozen=True)
class BridgeResult:
    log_evidence: float
    iterations_to_converge: int
    relative_change_at_stop: float
    converged: bool


def bridge_sampling(model: ModelSpec, posterior_samples: np.ndarray, n_proposal: int,
                    tol: float = 1e-10, max_iter: int = 1_000, seed: int = 0,
                    min_posterior_samples: int = 100) -> BridgeResult:
    """Optimal-bridge evidence estimate from posterior samples.

    The posterior samples are split in half: the first half fits a
    Gaussian proposal (moments plus a small diagonal inflation), the
    second enters the fixed-point iteration, avoiding the moment-fitting
    bias.  All arithmetic is carried in log space.  ``min_posterior_samples``
    guards against unusable sample counts; callers running tiny-budget
    benchmarks may lower it explicitly.
    """
    samples = np.atleast_2d(np.asarray(posterior_samples, dtype=float))
    if samples.shape[0] < min_posterior_samples:
        raise ValueError(
            f"bridge sampling needs at least {min_posterior_samples} posterior samples, "
            f"got {samples.shape[0]}"
        )
    if n_proposal < 1:
        raise ValueError("need at least one proposal draw")
    n_fit = samples.shape[0] // 2
    fit_half, iter_half = samples[:n_fit], samples[n_fit:]
    d = samples.shape[1]

    mean = fit_half.mean(axis=0)
    cov = np.cov(fit_half.T, ddof=1).reshape(d, d)
    cov = cov + 1e-9 * (np.trace(cov) / d + 1e-12) * np.eye(d)
    proposal = stats.multivariate_normal(mean=mean, cov=cov, allow_singular=True)

    rng = np.random.default_rng(seed)
    prop_draws = np.atleast_2d(proposal.rvs(size=n_proposal, random_state=rng))
    if prop_draws.shape[0] != n_proposal:
        prop_draws = prop_draws.reshape(n_proposal, d)

    def log_unnormalized(thetas):
        lp = model.prior.log_density(thetas)
        ll = _batch_log_likelihood(model, thetas)
        return lp + ll

    l_post = log_unnormalized(iter_half) - proposal.logpdf(iter_half)
    l_prop = log_unnormalized(prop_draws) - proposal.logpdf(prop_draws)
    l_post = np.atleast_1d(l_post)
    l_prop = np.atleast_1d(l_prop)

    n_post = l_post.shape[0]
    s_post = n_post / (n_post + n_proposal)
    s_prop = n_proposal / (n_post + n_proposal)
    l_star = float(np.median(l_post))
    e_post = np.exp(l_post - l_star)
    e_prop = np.exp(l_prop - l_star)

    r = 1.0  # evidence * exp(-l_star)
    rel_change = np.inf
    trace = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        num = float(np.mean(e_prop / (s_post * e_prop + s_prop * r)))
        den = float(np.mean(1.0 / (s_post * e_post + s_prop * r)))
        r_new = num / den
        if not np.isfinite(r_new) or r_new <= 0:
            raise ArithmeticError(
                f"bridge iteration diverged at step {iterations}; trace={trace}"
            )
        rel_change = abs(r_new - r) / r_new
        r = r_new
        trace.append(np.log(r) + l_star)
        if rel_change <= tol:
            break
    return BridgeResult(
        log_evidence=float(np.log(r) + l_star),
        iterations_to_converge=iterations,
        relative_change_at_stop=float(rel_change),
        converged=rel_change <= tol,
    )


@dataclass(frozen=True)
class RjmcmcDiagnostics:
    model_trace: np.ndarray  # model index per iteration, including burn-in
    switch_attempts: int
    switch_accepts: int
    within_acceptance_rate: float
    visits: tuple[int, int]  # post-burn-in iteration counts per model
    warnings: tuple[str, ...]
    burn_in: int


def rjmcmc(models, config: ChainConfig, jump_prob: float = 0.25,
           allow_transdimensional: bool = False) -> tuple[float, RjmcmcDiagnostics]:
    """Composite chain over (model index, parameters) for two models.

    With probability ``jump_prob`` a model switch through the identity
    map is proposed (unit Jacobian; for equal priors the acceptance
    ratio reduces to the likelihood ratio at the shared location);
    otherwise a within-model random-walk move is made.  The posterior
    probability of model 1 is estimated as its post-burn-in occupancy
    fraction.

    Models of unequal dimension are only accepted behind
    ``allow_transdimensional``; upward jumps then pad the extra
    coordinates with prior draws (which cancel in the acceptance ratio).
    """
    m1, m2 = models
    if not 0.0 <= jump_prob < 1.0:
        raise ValueError("jump_prob must lie in [0, 1)")
    if m1.dim != m2.dim and not allow_transdimensional:
        raise ValueError(
            "models have different dimensions; pass allow_transdimensional=True "
            "to enable prior-draw padding (untested against benchmarks)"
        )
    specs = {1: m1, 2: m2}
    rng = np.random.default_rng(config.seed)
    scales = {
        1: np.full(m1.dim, config.proposal_scales[0]) if config.proposal_scales.shape[0] == 1
        else config.proposal_scales[: m1.dim].copy(),
        2: np.full(m2.dim, config.proposal_scales[0]) if config.proposal_scales.shape[0] == 1
        else config.proposal_scales[: m2.dim].copy(),
    }

    current = 1
    theta = m1.prior.sample(1, rng)[0]
    log_lik = float(m1.log_likelihood(theta))
    log_prior = float(m1.prior.log_density(theta[None, :])[0])

    trace = np.empty(config.n_iterations, dtype=np.int8)
    switch_attempts = 0
    switch_accepts = 0
    within_attempts = 0
    within_accepts = 0
    accepted_window = 0
    window_count = 0

    for i in range(config.n_iterations):
        if rng.random() < jump_prob:
            switch_attempts += 1
            other = 2 if current == 1 else 1
            spec_o = specs[other]
            if spec_o.dim == theta.shape[0]:
                theta_o = theta
                log_ratio_pad = 0.0
            elif spec_o.dim > theta.shape[0]:
                pad = spec_o.prior.sample(1, rng)[0][theta.shape[0]:]
                theta_o = np.concatenate([theta, pad])
                # proposal for the padding equals its prior marginal, so
                # those density factors cancel
                log_ratio_pad = 0.0
            else:
                theta_o = theta[: spec_o.dim]
                log_ratio_pad = 0.0
            ll_o = float(spec_o.log_likelihood(theta_o))
            lp_o = float(spec_o.prior.log_density(theta_o[None, :])[0])
            log_alpha = (lp_o + ll_o) - (log_prior + log_lik) + log_ratio_pad
            if np.log(rng.random()) < log_alpha:
                current, theta, log_lik, log_prior = other, theta_o, ll_o, lp_o
                switch_accepts += 1
        else:
            within_attempts += 1
            spec = specs[current]
            prop = theta + scales[current] * rng.standard_normal(spec.dim)
            lp_p = float(spec.prior.log_density(prop[None, :])[0])
            if np.isfinite(lp_p):
                ll_p = float(spec.log_likelihood(prop))
                log_alpha = (lp_p + ll_p) - (log_prior + log_lik)
                if np.log(rng.random()) < log_alpha:
                    theta, log_lik, log_prior = prop, ll_p, lp_p
                    within_accepts += 1
                    if i < config.burn_in:
                        accepted_window += 1
            if i < config.burn_in:
                window_count += 1
                if window_count >= _ADAPT_WINDOW:
                    rate = accepted_window / window_count
                    scales[current] *= np.exp(rate - _TARGET_ACCEPTANCE)
                    accepted_window = 0
                    window_count = 0
        trace[i] = current

    post = trace[config.burn_in:]
    visits = (int(np.sum(post == 1)), int(np.sum(post == 2)))
    warns = []
    if visits[0] == 0 or visits[1] == 0:
        warns.append("non_mixing: chain never visited one model after burn-in")
        warnings.warn(warns[-1], RuntimeWarning, stacklevel=2)
    z1 = visits[0] / max(len(post), 1)
    diagnostics = RjmcmcDiagnostics(
        model_trace=trace,
        switch_attempts=switch_attempts,
        switch_accepts=switch_accepts,
        within_acceptance_rate=within_accepts / max(within_attempts, 1),
        visits=visits,
        warnings=tuple(warns),
        burn_in=config.burn_in,
    )
    return float(z1), diagnostics
