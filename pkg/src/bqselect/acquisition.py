"""Acquisition of likelihood-evaluation locations across two model spaces.

The primary acquisition scores a candidate location by the mutual
information between the likelihood value there and the posterior model
probability, estimated by averaging Gaussian conditional-entropy
reductions over Monte Carlo draws of the posterior probability.  A
model-choice variant targets the binary indicator of which evidence is
larger.  Both search each model's parameter space with a fixed candidate
pool refined by bounded local search; uncertainty sampling provides the
round-robin baseline objective and the fallback policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtr
from numpy.polynomial.hermite import hermgauss

from .errors import DegenerateBeliefError
from .evidence import JointEvidenceView, information_profile
from .warp import WarpedSurrogate

__all__ = [
    "binary_entropy",
    "PosteriorProbabilityBelief",
    "sample_z1",
    "mi_z1",
    "mi_model_choice",
    "AcquisitionConfig",
    "AcquisitionResult",
    "select_next",
    "select_next_model_choice",
    "uncertainty_sampling",
]


def binary_entropy(p) -> np.ndarray | float:
    """Entropy of a Bernoulli(p) variable in nats, with 0 log 0 := 0."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr < -1e-12) or np.any(p_arr > 1.0 + 1e-12):
        raise ValueError("binary_entropy requires probabilities in [0, 1]")
    p_arr = np.clip(p_arr, 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p_arr > 0, p_arr * np.log(p_arr), 0.0) - np.where(
            p_arr < 1, (1.0 - p_arr) * np.log1p(-p_arr), 0.0
        )
    return float(h) if np.isscalar(p) else h


@dataclass(frozen=True)
class PosteriorProbabilityBelief:
    """Monte Carlo draws of the posterior probability of model 1."""

    z_samples: np.ndarray
    sample_count: int
    degenerate_flag: bool
    n_rejected: int = 0

    @property
    def mean(self) -> float:
        return float(self.z_samples.mean())


def sample_z1(view: JointEvidenceView, n: int, seed) -> PosteriorProbabilityBelief:
    """Draw z1 = a1 / (a1 + a2) with both evidences rejected to positive values.

    Pairs with either evidence draw <= 0 are redrawn and counted.  The
    belief is flagged degenerate when more than half of all draws were
    rejected; above 99% rejection the belief is unusable and the caller
    must switch to the offset-degeneracy fallback.
    """
    if n < 1_000:
        raise ValueError("z1 sampling needs at least 1000 draws")
    if view.degenerate:
        value = 1.0 if view.dominant == 1 else 0.0
        return PosteriorProbabilityBelief(np.full(n, value), n, True, 0)

    rng = np.random.default_rng(seed)
    s1 = np.sqrt(max(view.K1, 0.0))
    s2 = np.sqrt(max(view.K2, 0.0))
    accepted = []
    n_accepted = 0
    total = 0
    cap = 200 * n
    while n_accepted < n and total < cap:
        batch = max(n - n_accepted, 4096)
        a1 = view.m1 + s1 * rng.standard_normal(batch)
        a2 = view.m2 + s2 * rng.standard_normal(batch)
        keep = (a1 > 0) & (a2 > 0)
        total += batch
        kept1, kept2 = a1[keep], a2[keep]
        accepted.append(kept1 / (kept1 + kept2))
        n_accepted += kept1.shape[0]
    rejected = total - n_accepted
    rate = rejected / total if total else 0.0
    if n_accepted < n:
        raise DegenerateBeliefError(
            f"rejection rate {rate:.4f} exceeds 0.99; switch to the "
            "offset-degeneracy fallback (point-mass posterior probability)"
        )
    z = np.concatenate(accepted)[:n]
    return PosteriorProbabilityBelief(z, n, rate > 0.5, rejected)


def _surrogate_for(surrogates, model_index):
    return surrogates[model_index - 1]


def mi_z1(view, surrogates, theta, model_index, z_belief) -> float:
    """Mutual information between the likelihood value at theta and z1."""
    if z_belief.degenerate_flag:
        return 0.0
    surrogate = _surrogate_for(surrogates, model_index)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    sigma, L_vals = view.profile_for(model_index, theta, surrogate)
    info = information_profile(sigma, L_vals, view.K1, view.K2, z_belief.z_samples, model_index)
    return float(info[0])


def _mi_z1_batch(view, surrogate, thetas, model_index, z_belief) -> np.ndarray:
    sigma, L_vals = view.profile_for(model_index, thetas, surrogate)
    return information_profile(sigma, L_vals, view.K1, view.K2, z_belief.z_samples, model_index)


def _gh_nodes(n):
    t, w = hermgauss(n)
    return t, w / np.sqrt(np.pi)


def _model_choice_conditional(view, surrogate, thetas, model_index, gh_points=32) -> np.ndarray:
    """Expected posterior indicator entropy after observing each location."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    sigma, L_vals = view.profile_for(model_index, thetas, surrogate)
    t_nodes, weights = _gh_nodes(gh_points)

    total_var = view.K1 + view.K2
    prior_p = _indicator_probability(view)
    out = np.full(thetas.shape[0], binary_entropy(prior_p))
    ok = sigma > 0
    if not np.any(ok):
        return out

    u = L_vals[ok] / np.sqrt(sigma[ok])  # = L / sqrt(Sigma); |u| <= sqrt(K_i)
    K_cond = np.maximum((view.K1 if model_index == 1 else view.K2) - u**2, 0.0)
    K_other = view.K2 if model_index == 1 else view.K1
    var_diff = K_cond + K_other
    base_gap = view.m1 - view.m2
    sign = 1.0 if model_index == 1 else -1.0

    # conditioning on a likelihood value v shifts the evidence mean by
    # u * (v - mu)/sqrt(Sigma); at Gauss-Hermite nodes that is u * sqrt(2) t
    shift = np.sqrt(2.0) * u[:, None] * t_nodes[None, :]
    gap = base_gap + sign * shift
    sd = np.sqrt(var_diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        arg = np.where(sd[:, None] > 0, gap / sd[:, None], np.where(gap >= 0, np.inf, -np.inf))
    h = binary_entropy(ndtr(arg))
    out[ok] = h @ weights
    return out


def _indicator_probability(view) -> float:
    total_var = view.K1 + view.K2
    if total_var <= 0:
        return 1.0 if view.m1 > view.m2 else 0.0 if view.m1 < view.m2 else 0.5
    return float(ndtr((view.m1 - view.m2) / np.sqrt(total_var)))


def mi_model_choice(view, surrogates, theta, model_index, gh_points: int = 32) -> float:
    """Mutual information between the likelihood value and the indicator
    of which model's evidence is larger.

    The prior term is the binary entropy of Pr(a1 > a2); the conditional
    term is a one-dimensional Gauss-Hermite integral over the likelihood
    value's marginal.
    """
    if view.K1 + view.K2 <= 0:
        return 0.0
    surrogate = _surrogate_for(surrogates, model_index)
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    prior_h = binary_entropy(_indicator_probability(view))
    cond = _model_choice_conditional(view, surrogate, theta, model_index, gh_points)
    mi = prior_h - float(cond[0])
    if -1e-8 < mi < 0.0:
        mi = 0.0
    return mi


@dataclass(frozen=True)
class AcquisitionConfig:
    """Candidate-pool optimizer settings.

    The pool per model is ``pool_size`` prior draws plus
    ``low_discrepancy_pool`` Halton points; the ``refine_top`` best pool
    candidates are polished by bounded Nelder-Mead in normalized
    coordinates.  Proposals within ``guard_radius`` (normalized) of an
    existing observation are rejected and re-proposed.
    """

    pool_size: int = 512
    low_discrepancy_pool: int = 64
    refine_top: int = 5
    refine_tol: float = 1e-4
    refine_max_evals: int = 200
    guard_radius: float = 1e-8
    degenerate_score: float = 1e-8
    gh_points: int = 32
    seed: int = 0


@dataclass(frozen=True)
class AcquisitionResult:
    model_index: int
    theta_star: np.ndarray
    score: float
    candidates_evaluated: int
    flags: tuple[str, ...] = ()


def _guard_ok(u_points, u_existing, radius):
    if u_existing.shape[0] == 0:
        return np.ones(u_points.shape[0], dtype=bool)
    d2 = ((u_points[:, None, :] - u_existing[None, :, :]) ** 2).sum(axis=-1)
    return d2.min(axis=1) > radius**2


def _build_pool(prior, existing, cfg, seed_material):
    ss = np.random.SeedSequence(seed_material)
    rng = np.random.default_rng(ss)
    qmc_seed = int(ss.generate_state(1)[0])
    pool = [prior.sample(cfg.pool_size, rng)]
    if cfg.low_discrepancy_pool > 0:
        pool.append(prior.sample_low_discrepancy(cfg.low_discrepancy_pool, qmc_seed))
    pts = np.concatenate(pool, axis=0)
    u_existing = prior.to_normalized(existing) if existing.shape[0] else np.empty((0, prior.dim))
    target = pts.shape[0]
    for _ in range(20):
        keep = _guard_ok(prior.to_normalized(pts), u_existing, cfg.guard_radius)
        pts = pts[keep]
        if pts.shape[0] >= target:
            break
        pts = np.concatenate([pts, prior.sample(target - pts.shape[0], rng)], axis=0)
    if pts.shape[0] == 0:
        raise RuntimeError("could not propose any candidate outside the duplicate guard")
    return pts


def _optimize_space(batch_objective, prior, existing, cfg, seed_material):
    """Maximize a batch objective by pool evaluation plus local refinement.

    Returns (theta, score, n_evaluations).  The refinement works in
    normalized prior coordinates with the configured tolerance and
    evaluation cap, and refined points falling inside the duplicate
    guard are discarded in favor of their pool candidate.
    """
    pool = _build_pool(prior, existing, cfg, seed_material)
    scores = np.nan_to_num(batch_objective(pool), nan=-1e300, neginf=-1e300, posinf=1e300)
    n_evals = pool.shape[0]
    order = np.argsort(scores)[::-1]
    top = order[: max(1, cfg.refine_top)]
    u_existing = prior.to_normalized(existing) if existing.shape[0] else np.empty((0, prior.dim))
    bounds = prior.normalized_bounds()

    best_theta = pool[order[0]]
    best_score = float(scores[order[0]])
    for idx in top:
        u0 = prior.to_normalized(pool[idx])[0]

        def neg(u):
            val = float(batch_objective(prior.from_normalized(u[None, :]))[0])
            if not np.isfinite(val):
                return 1e300
            return -val

        res = optimize.minimize(
            neg,
            u0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "xatol": cfg.refine_tol,
                "fatol": 1e-12,
                "maxfev": cfg.refine_max_evals,
                "disp": False,
            },
        )
        n_evals += int(res.nfev)
        u_ref = np.clip(res.x, [b[0] for b in bounds], [b[1] for b in bounds])
        if not _guard_ok(u_ref[None, :], u_existing, cfg.guard_radius)[0]:
            continue
        if np.isfinite(res.fun) and -res.fun > best_score:
            best_score = float(-res.fun)
            best_theta = prior.from_normalized(u_ref[None, :])[0]
    return np.atleast_1d(best_theta), best_score, n_evals


def uncertainty_sampling(surrogate, prior, opt_config: AcquisitionConfig | None = None) -> np.ndarray:
    """Location maximizing prior-weighted surrogate variance.

    The objective is cov(theta, theta) * prior(theta)^2, maximized in
    log space over the same pool-plus-refinement optimizer as the
    information acquisitions.
    """
    cfg = opt_config or AcquisitionConfig()

    def batch_objective(thetas):
        if isinstance(surrogate, WarpedSurrogate):
            log_var = surrogate.log_var(thetas)
        else:
            with np.errstate(divide="ignore"):
                log_var = np.log(np.maximum(surrogate.var(thetas), 0.0))
        return log_var + 2.0 * prior.log_density(thetas)

    theta, _, _ = _optimize_space(
        batch_objective, prior, surrogate.observed_locations, cfg, [cfg.seed, 0xA5]
    )
    return theta


def _fallback_result(view, surrogates, priors, cfg, reason):
    if view.degenerate and view.dominant is not None:
        model = view.dominant
    else:
        counts = [s.n_observations for s in surrogates]
        model = 1 if counts[0] <= counts[1] else 2
    theta = uncertainty_sampling(
        _surrogate_for(surrogates, model), priors[model - 1], cfg
    )
    return AcquisitionResult(
        model_index=model,
        theta_star=theta,
        score=0.0,
        candidates_evaluated=0,
        flags=("fallback_uncertainty_sampling", reason),
    )


def _select_by_objective(view, surrogates, priors, cfg, batch_objective_for, score_transform=None):
    per_model = []
    total_evals = 0
    for model_index in (1, 2):
        surrogate = _surrogate_for(surrogates, model_index)
        # the pool seed is shared across models: symmetric beliefs then see
        # mirrored candidate pools and tie exactly
        theta, score, n_evals = _optimize_space(
            batch_objective_for(model_index),
            priors[model_index - 1],
            surrogate.observed_locations,
            cfg,
            [cfg.seed],
        )
        if score_transform is not None:
            score = score_transform(score)
        per_model.append((theta, score))
        total_evals += n_evals
    (theta1, score1), (theta2, score2) = per_model
    if score1 > score2:
        chosen, theta, score = 1, theta1, score1
    elif score2 > score1:
        chosen, theta, score = 2, theta2, score2
    else:
        counts = [s.n_observations for s in surrogates]
        chosen = 1 if counts[0] <= counts[1] else 2
        theta, score = per_model[chosen - 1]
    return chosen, theta, score, total_evals


def select_next(view, surrogates, priors, z_belief, opt_config: AcquisitionConfig | None = None) -> AcquisitionResult:
    """Next evaluation: the (model, location) pair with the larger optimized
    mutual information with the posterior model probability.

    Exact score ties break toward the model with fewer observations,
    then model 1.  Degenerate beliefs (point-mass posterior probability
    or near-zero information everywhere) fall back to uncertainty
    sampling, flagged in the result.
    """
    cfg = opt_config or AcquisitionConfig()
    if view.degenerate or z_belief.degenerate_flag:
        return _fallback_result(view, surrogates, priors, cfg, "degenerate_posterior_belief")

    def objective_for(model_index):
        surrogate = _surrogate_for(surrogates, model_index)

        def batch(thetas):
            return _mi_z1_batch(view, surrogate, thetas, model_index, z_belief)

        return batch

    chosen, theta, score, total_evals = _select_by_objective(view, surrogates, priors, cfg, objective_for)
    if score < cfg.degenerate_score:
        return _fallback_result(view, surrogates, priors, cfg, "near_zero_information")
    return AcquisitionResult(chosen, theta, score, total_evals)


def select_next_model_choice(view, surrogates, priors, opt_config: AcquisitionConfig | None = None) -> AcquisitionResult:
    """Next evaluation under the model-choice (indicator) acquisition.

    The indicator's prior entropy is constant in the location, so the
    search maximizes the negated conditional term only; the reported
    score is the full mutual information at the argmax.  When the belief
    is already confident the scores collapse to zero everywhere and the
    selection falls back to uncertainty sampling, flagged.
    """
    cfg = opt_config or AcquisitionConfig()
    if view.degenerate or view.K1 + view.K2 <= 0:
        return _fallback_result(view, surrogates, priors, cfg, "degenerate_posterior_belief")

    prior_h = binary_entropy(_indicator_probability(view))

    def objective_for(model_index):
        surrogate = _surrogate_for(surrogates, model_index)

        def batch(thetas):
            return -_model_choice_conditional(view, surrogate, thetas, model_index, cfg.gh_points)

        return batch

    def to_mi(neg_cond):
        mi = prior_h + neg_cond
        if -1e-8 < mi < 0.0:
            mi = 0.0
        return mi

    chosen, theta, score, total_evals = _select_by_objective(
        view, surrogates, priors, cfg, objective_for, score_transform=to_mi
    )
    if score < cfg.degenerate_score:
        return _fallback_result(view, surrogates, priors, cfg, "degenerate_confidence")
    return AcquisitionResult(chosen, theta, score, total_evals)
