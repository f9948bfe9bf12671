"""From likelihood surrogates to Gaussian evidence beliefs.

A surrogate belief over one model's likelihood induces a Gaussian belief
over that model's evidence (the integral of the likelihood against the
parameter prior): mean m, variance K, and the covariance profile L(theta)
between the likelihood value at theta and the evidence.  These moments
are computed either by fixed-node Monte Carlo quadrature over prior
samples or, for a squared-exponential kernel with a diagonal Gaussian
prior and an identity-warp surrogate, by closed-form Gaussian
convolution identities.

Warped surrogates are handled in log space throughout: when the
moment-matched moments would overflow double precision, the belief is
re-centered by enlarging its log offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg as sla
from scipy.special import logsumexp

from ._pairsum import prior_pair_row_sums
from .kernels import SQUARED_EXPONENTIAL, cross_gram
from .priors import DiagonalGaussianPrior
from .warp import LinearSurrogate, WarpedSurrogate

__all__ = [
    "QuadratureConfig",
    "EvidenceBelief",
    "evidence_belief",
    "JointEvidenceView",
    "joint_view",
    "pivot_moments",
    "conditional_likelihood_entropy",
    "information_profile",
]

# beliefs are re-centered when log moments would exceed this, keeping
# products like K1 + K2 or w*L finite in double precision
OFFSET_CAP = 340.0

# relative floor for the conditional variance after cancellation
CLAMP_EPS = 1e-12

OFFSET_DEGENERACY_LIMIT = 700.0

_CHUNK_ELEMENTS = int(5e6)


@dataclass(frozen=True)
class QuadratureConfig:
    """Node-set settings for evidence-moment quadrature.

    ``method`` is one of "auto", "monte_carlo", "closed_form"; "auto"
    uses the closed form whenever it applies.  Pair sums for the
    evidence variance use the full double sum up to ``dense_pair_limit``
    nodes and an unbiased subsampled block estimate above it.
    """

    n_nodes: int = 10_000
    method: str = "auto"
    sampling: str = "iid"  # "iid" or "low_discrepancy"
    seed: int = 0
    dense_pair_limit: int = 2_000
    pair_subsample: int = 2_000

    def __post_init__(self):
        if self.method not in ("auto", "monte_carlo", "closed_form"):
            raise ValueError(f"unknown quadrature method {self.method!r}")
        if self.sampling not in ("iid", "low_discrepancy"):
            raise ValueError(f"unknown sampling scheme {self.sampling!r}")


@dataclass(frozen=True)
class EvidenceBelief:
    """Gaussian belief over one model's (offset-scaled) evidence."""

    mean_m: float
    var_K: float
    cov_profile_L: Callable[[np.ndarray], np.ndarray]
    log_offset: float
    quadrature_nodes: np.ndarray | None
    log_mean: float  # log(mean_m), -inf when mean_m <= 0
    mean_se: float  # Monte Carlo standard error of mean_m (nan for closed form)
    var_K_se: float = float("nan")  # standard-error estimate for var_K when available
    clamp_count: int = 0
    closed_form: bool = False
    # fused (marginal variance, covariance profile) evaluation in belief
    # units, sharing the kernel queries; optimizers hit this thousands of
    # times per step
    profile: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None
    # how much the belief was re-centered beyond the surrogate's offset;
    # the surrogate's variance times exp(-2 log_extra) is in belief units
    log_extra: float = 0.0


def _se_gaussian_kernel_mean(kernel, prior: DiagonalGaussianPrior, T) -> np.ndarray:
    """Integral of k(t, .) against the Gaussian prior, evaluated at T."""
    T = np.atleast_2d(np.asarray(T, dtype=float))
    ell2 = kernel.length_scales**2
    B = prior.scale**2
    amp = kernel.output_scale * np.prod(1.0 / np.sqrt(1.0 + B / ell2))
    q = ((T - prior.loc) ** 2) / (ell2 + B)
    return amp * np.exp(-0.5 * q.sum(axis=1))


def _se_gaussian_double_integral(kernel, prior: DiagonalGaussianPrior) -> float:
    ell2 = kernel.length_scales**2
    B = prior.scale**2
    return float(kernel.output_scale * np.prod(1.0 / np.sqrt(1.0 + 2.0 * B / ell2)))


def _closed_form_applicable(surrogate, prior) -> bool:
    return (
        isinstance(surrogate, LinearSurrogate)
        and surrogate.gp.kernel.family == SQUARED_EXPONENTIAL
        and isinstance(prior, DiagonalGaussianPrior)
    )


def _closed_form_belief(surrogate: LinearSurrogate, prior) -> EvidenceBelief:
    gp = surrogate.gp
    kernel = gp.kernel
    double = _se_gaussian_double_integral(kernel, prior)
    clamps = 0
    if gp.n_observations == 0:
        m = gp.mean_const
        K = double
        L = lambda T: _se_gaussian_kernel_mean(kernel, prior, T)  # noqa: E731
    else:
        zX = _se_gaussian_kernel_mean(kernel, prior, gp.obs_locations)
        m = gp.mean_const + float(zX @ gp._alpha)
        w = sla.cho_solve((gp.cholesky_factor, True), zX)
        K = double - float(zX @ w)
        if K < 0:
            K = 0.0
            clamps += 1

        def L(T, _w=w):
            T = np.atleast_2d(np.asarray(T, dtype=float))
            return _se_gaussian_kernel_mean(kernel, prior, T) - cross_gram(
                kernel, T, gp.obs_locations
            ) @ _w

    def profile(T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        return gp.var(T), L(T)

    log_mean = float(np.log(m)) if m > 0 else -np.inf
    return EvidenceBelief(
        mean_m=float(m),
        var_K=float(K),
        cov_profile_L=L,
        log_offset=surrogate.log_offset,
        quadrature_nodes=None,
        log_mean=log_mean,
        mean_se=float("nan"),
        clamp_count=clamps,
        closed_form=True,
        profile=profile,
    )


def _draw_nodes(prior, cfg: QuadratureConfig) -> np.ndarray:
    if cfg.sampling == "low_discrepancy":
        return prior.sample_low_discrepancy(cfg.n_nodes, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    return prior.sample(cfg.n_nodes, rng)


def _subsample_rng(cfg) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5EED]))


def _pair_stats_linear(gp, nodes, cfg):
    """Pair mean of the posterior covariance over nodes, with an SE estimate."""
    n = nodes.shape[0]
    if n <= cfg.dense_pair_limit:
        # prior pair sums plus a low-rank correction for conditioning
        row = prior_pair_row_sums(gp.kernel, nodes)
        if gp.n_observations:
            kX = cross_gram(gp.kernel, gp.obs_locations, nodes)
            s_vec = kX.sum(axis=1)
            w = sla.cho_solve((gp.cholesky_factor, True), s_vec)
            row = row - kX.T @ w
        g = row / n
        K = float(g.mean())
        se = 2.0 * float(g.std(ddof=1)) / np.sqrt(n) if n > 1 else float("nan")
        return K, se
    rng = _subsample_rng(cfg)
    b = cfg.pair_subsample
    j = rng.integers(0, n, size=b)
    q = rng.integers(0, n, size=b)
    block = gp.cov(nodes[j], nodes[q])
    r = block.mean(axis=1)
    K = float(r.mean())
    se = np.sqrt(2.0) * float(r.std(ddof=1)) / np.sqrt(b)
    return K, se


def _mc_belief_linear(surrogate: LinearSurrogate, prior, cfg: QuadratureConfig) -> EvidenceBelief:
    nodes = _draw_nodes(prior, cfg)
    n = nodes.shape[0]
    gp = surrogate.gp
    mu = gp.mean(nodes)
    m = float(mu.mean())
    mean_se = float(mu.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    K, K_se = _pair_stats_linear(gp, nodes, cfg)
    clamps = 0
    if K < 0:
        K = 0.0
        clamps += 1

    cov_nodes = gp.cov_with_fixed(nodes)

    def L(T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        out = np.empty(T.shape[0])
        step = max(1, _CHUNK_ELEMENTS // max(n, 1))
        for s in range(0, T.shape[0], step):
            out[s : s + step] = cov_nodes(T[s : s + step]).mean(axis=1)
        return out

    def profile(T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        return gp.var(T), L(T)

    log_mean = float(np.log(m)) if m > 0 else -np.inf
    return EvidenceBelief(m, float(K), L, surrogate.log_offset, nodes, log_mean,
                          mean_se, K_se, clamps, closed_form=False, profile=profile)


def _warped_pair_log_sum(log_gp, nodes_rows, nodes_cols, eta_rows, eta_cols):
    """log of sum over the block of exp(eta_i + eta_j) * expm1(C_ij).

    Returns (log_abs_sum, positive); row chunks are merged in a shifted
    (log-sum-exp style) accumulation so arbitrarily large latent moments
    stay finite.
    """
    n_cols = nodes_cols.shape[0]
    step = max(1, _CHUNK_ELEMENTS // max(n_cols, 1))
    parts = []  # (local_max, sum_exp_A, sum_exp_B)
    for s in range(0, nodes_rows.shape[0], step):
        C = log_gp.cov(nodes_rows[s : s + step], nodes_cols)
        base = eta_rows[s : s + step, None] + eta_cols[None, :]
        A = base + C
        M = max(float(A.max()), float(base.max()))
        parts.append((M, float(np.exp(A - M).sum()), float(np.exp(base - M).sum())))
    M_star = max(p[0] for p in parts)
    S_A = sum(np.exp(p[0] - M_star) * p[1] for p in parts)
    S_B = sum(np.exp(p[0] - M_star) * p[2] for p in parts)
    diff = S_A - S_B
    if diff == 0.0:
        return -np.inf, True
    return M_star + float(np.log(abs(diff))), diff > 0


def _mc_belief_warped(surrogate: WarpedSurrogate, prior, cfg: QuadratureConfig) -> EvidenceBelief:
    nodes = _draw_nodes(prior, cfg)
    n = nodes.shape[0]
    log_gp = surrogate.log_gp
    g = log_gp.mean(nodes)
    v = log_gp.var(nodes)

    # re-center when exponentiated moments would overflow downstream
    extra = max(0.0, float(np.max(g + v)) - OFFSET_CAP)
    g = g - extra
    eta = g + 0.5 * v

    log_m = float(logsumexp(eta) - np.log(n))
    m = float(np.exp(log_m))
    mu = np.exp(eta)
    mean_se = float(mu.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")

    clamps = 0
    if n <= cfg.dense_pair_limit:
        log_s, positive = _warped_pair_log_sum(log_gp, nodes, nodes, eta, eta)
        log_K = log_s - 2.0 * np.log(n)
    else:
        rng = _subsample_rng(cfg)
        b = cfg.pair_subsample
        j = rng.integers(0, n, size=b)
        q = rng.integers(0, n, size=b)
        log_s, positive = _warped_pair_log_sum(log_gp, nodes[j], nodes[q], eta[j], eta[q])
        log_K = log_s - 2.0 * np.log(b)
    if not positive:
        K = 0.0
        clamps += 1
    else:
        K = float(np.exp(log_K))

    query_nodes = log_gp.query_with_fixed(nodes)

    def profile(T, _eta=eta, _extra=extra):
        """(variance, covariance profile) pairs in one kernel pass.

        Query points whose latent moments would overflow even after the
        belief-level re-centering get an additional per-point shift
        applied to both outputs; information ratios only ever use
        L / sqrt(sigma), which such a shift leaves unchanged.
        """
        T = np.atleast_2d(np.asarray(T, dtype=float))
        sigma = np.empty(T.shape[0])
        L_out = np.empty(T.shape[0])
        step = max(1, _CHUNK_ELEMENTS // max(n, 1))
        for s in range(0, T.shape[0], step):
            block = T[s : s + step]
            gq_raw, vq, Cq = query_nodes(block)
            gq = gq_raw - _extra
            gq = gq - np.maximum(gq + vq - OFFSET_CAP, 0.0)
            sigma[s : s + step] = np.exp(2.0 * gq + vq) * np.expm1(vq)
            eq = gq + 0.5 * vq
            base = eq[:, None] + _eta[None, :]
            A = base + Cq
            M = np.maximum(A.max(axis=1), base.max(axis=1))
            vals = np.exp(A - M[:, None]).sum(axis=1) - np.exp(base - M[:, None]).sum(axis=1)
            L_out[s : s + step] = np.exp(M) * vals / n
        return sigma, L_out

    def L(T):
        return profile(T)[1]

    return EvidenceBelief(
        mean_m=m,
        var_K=K,
        cov_profile_L=L,
        log_offset=surrogate.log_offset + extra,
        quadrature_nodes=nodes,
        log_mean=log_m,
        mean_se=mean_se,
        clamp_count=clamps,
        closed_form=False,
        profile=profile,
        log_extra=extra,
    )


def evidence_belief(surrogate, prior, quad_config: QuadratureConfig | None = None) -> EvidenceBelief:
    """Gaussian evidence belief (m, K) and covariance profile L for one model.

    Monte Carlo moments over N prior nodes x_j:

        m       = mean_j mu(x_j)
        K       = mean_{j,k} Sigma(x_j, x_k)
        L(t)    = mean_j Sigma(t, x_j)

    For an identity-warp surrogate with a squared-exponential kernel and
    a diagonal Gaussian prior the Gaussian convolution identities are
    used instead (``method="auto"``); force one path with
    ``method="monte_carlo"`` or ``method="closed_form"``.
    """
    cfg = quad_config or QuadratureConfig()
    if cfg.method != "closed_form" and cfg.n_nodes < 100:
        raise ValueError("quadrature needs at least 100 nodes")
    if cfg.method == "closed_form" or (cfg.method == "auto" and _closed_form_applicable(surrogate, prior)):
        if not _closed_form_applicable(surrogate, prior):
            raise ValueError(
                "closed form requires an identity-warp surrogate with a "
                "squared-exponential kernel and a diagonal Gaussian prior"
            )
        return _closed_form_belief(surrogate, prior)
    if isinstance(surrogate, WarpedSurrogate):
        return _mc_belief_warped(surrogate, prior, cfg)
    return _mc_belief_linear(surrogate, prior, cfg)


@dataclass(frozen=True)
class JointEvidenceView:
    """Both models' evidence beliefs on a single log-offset convention.

    Model 2's moments are rescaled into model 1's units; the evidences
    stay independent (zero cross-covariance).  ``degenerate`` marks the
    case where one model's rescaled moments underflow to zero, in which
    case the posterior model probability collapses to a point mass at
    the ``dominant`` model.
    """

    m1: float
    m2: float
    K1: float
    K2: float
    L1: Callable[[np.ndarray], np.ndarray]
    L2: Callable[[np.ndarray], np.ndarray]
    log_offset: float
    log_mean1: float
    log_mean2: float
    degenerate: bool = False
    dominant: int | None = None
    independent: bool = field(default=True, init=False)
    # fused per-model (variance, profile) queries when the beliefs carry
    # them; model 2's profile values are already offset-reconciled
    profile1: Callable | None = None
    profile2: Callable | None = None
    # log scale converting each surrogate's variance into its belief's
    # units (nonpositive; nonzero only after an overflow re-centering)
    var_log_scale1: float = 0.0
    var_log_scale2: float = 0.0

    def profile_for(self, model_index: int, thetas, surrogate=None):
        """(marginal variance, covariance profile) for one model.

        The pair is unit-consistent with (K1, K2): profile values for
        model 2 carry the offset-reconciliation scale, variances stay in
        the model's own belief units (the common factor cancels in
        information ratios).
        """
        fused = self.profile1 if model_index == 1 else self.profile2
        if fused is not None:
            return fused(thetas)
        if surrogate is None:
            raise ValueError("no fused profile on this view; pass the surrogate")
        scale = self.var_log_scale1 if model_index == 1 else self.var_log_scale2
        sigma = surrogate.var(thetas) * np.exp(2.0 * scale)
        L_fn = self.L1 if model_index == 1 else self.L2
        return sigma, L_fn(thetas)


def joint_view(e1: EvidenceBelief, e2: EvidenceBelief) -> JointEvidenceView:
    """Package two evidence beliefs for acquisition, reconciling offsets."""
    delta = e2.log_offset - e1.log_offset
    lam1 = e1.log_mean + e1.log_offset
    lam2 = e2.log_mean + e2.log_offset

    def degenerate_view(dominant):
        zero = lambda T: np.zeros(np.atleast_2d(np.asarray(T, dtype=float)).shape[0])  # noqa: E731
        return JointEvidenceView(
            m1=1.0 if dominant == 1 else 0.0,
            m2=1.0 if dominant == 2 else 0.0,
            K1=0.0,
            K2=0.0,
            L1=zero,
            L2=zero,
            log_offset=e1.log_offset,
            log_mean1=lam1 - e1.log_offset,
            log_mean2=lam2 - e1.log_offset,
            degenerate=True,
            dominant=dominant,
        )

    if abs(delta) > OFFSET_DEGENERACY_LIMIT:
        return degenerate_view(1 if lam1 >= lam2 else 2)
    with np.errstate(over="ignore", under="ignore"):
        scale = np.exp(delta)
        m2 = e2.mean_m * scale
        K2 = e2.var_K * scale**2
    if not (np.isfinite(m2) and np.isfinite(K2)) or (m2 == 0.0 and e2.mean_m > 0.0):
        return degenerate_view(1 if lam1 >= lam2 else 2)

    L2_raw = e2.cov_profile_L
    if delta == 0.0:
        L2 = L2_raw
    else:
        L2 = lambda T: L2_raw(T) * scale  # noqa: E731

    profile1 = e1.profile
    if e2.profile is None:
        profile2 = None
    elif delta == 0.0:
        profile2 = e2.profile
    else:
        def profile2(T, _p=e2.profile, _s=scale):
            sigma, L_vals = _p(T)
            return sigma, L_vals * _s

    return JointEvidenceView(
        m1=e1.mean_m,
        m2=float(m2),
        K1=e1.var_K,
        K2=float(K2),
        L1=e1.cov_profile_L,
        L2=L2,
        log_offset=e1.log_offset,
        log_mean1=e1.log_mean,
        log_mean2=e2.log_mean + delta,
        profile1=profile1,
        profile2=profile2,
        var_log_scale1=-e1.log_extra,
        var_log_scale2=-e2.log_extra,
    )


def pivot_moments(view: JointEvidenceView, z1: float) -> tuple[float, float]:
    """Mean and variance of the pivot (z1 - 1) a1 + z1 a2.

    Observing the posterior model probability z1 is equivalent to
    observing that this linear combination of the evidences equals zero.
    """
    if not 0.0 < z1 < 1.0:
        raise ValueError(f"z1 must lie strictly inside (0, 1), got {z1}")
    if view.K1 + view.K2 <= 0.0:
        raise ValueError("pivot variance requires K1 + K2 > 0")
    beta = (z1 - 1.0) * view.m1 + z1 * view.m2
    s_sq = (z1 - 1.0) ** 2 * view.K1 + z1**2 * view.K2
    if s_sq == 0.0:
        raise ValueError("conditioning on a deterministic pivot is undefined")
    return float(beta), float(s_sq)


def information_profile(sigma, L_vals, K1, K2, z_values, model_index) -> np.ndarray:
    """Entropy reduction about the likelihood value, averaged over z draws.

    Vectorized over locations: ``sigma`` and ``L_vals`` are aligned
    arrays of marginal variances and covariance-profile values, and
    ``z_values`` is the sample of posterior-probability draws.  Returns
    the per-location mean of -0.5 log(1 - rho^2), clamped to keep the
    conditional variance at least CLAMP_EPS of the marginal.
    """
    sigma = np.atleast_1d(np.asarray(sigma, dtype=float))
    L_vals = np.atleast_1d(np.asarray(L_vals, dtype=float))
    z = np.asarray(z_values, dtype=float)
    w = (z - 1.0) if model_index == 1 else z
    s = np.sqrt((z - 1.0) ** 2 * K1 + z**2 * K2)
    out = np.zeros(sigma.shape[0])
    ok = sigma > 0
    if not np.any(ok):
        return out
    u = np.zeros_like(L_vals)
    u[ok] = L_vals[ok] / np.sqrt(sigma[ok])
    with np.errstate(divide="ignore", invalid="ignore"):
        vz = np.where(s > 0, w / s, 0.0)
    step = max(1, int(2e7) // max(z.shape[0], 1))
    for i in range(0, sigma.shape[0], step):
        t = u[i : i + step, None] * vz[None, :]
        inner = np.maximum(1.0 - t**2, CLAMP_EPS)
        out[i : i + step] = -0.5 * np.log(inner).mean(axis=1)
    out[~ok] = 0.0
    return out


def conditional_likelihood_entropy(view: JointEvidenceView, surrogate, theta, z1: float,
                                   model_index: int) -> float:
    """Entropy reduction of the likelihood value at theta from observing z1.

    Equals 0.5 log Sigma(theta, theta) minus the conditional entropy
    term 0.5 log(Sigma - w^2 L^2 / s^2) with w = z1 - 1 for model 1 and
    w = z1 for model 2; nonnegative by the Cauchy-Schwarz inequality,
    with the conditional variance clamped at CLAMP_EPS * Sigma against
    floating-point cancellation.
    """
    if model_index not in (1, 2):
        raise ValueError("model_index must be 1 or 2")
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    scale = view.var_log_scale1 if model_index == 1 else view.var_log_scale2
    sigma = float(surrogate.var(theta)[0]) * float(np.exp(2.0 * scale))
    if sigma <= 0.0:
        raise ValueError("conditional entropy requires an unobserved location (Sigma > 0)")
    _, s_sq = pivot_moments(view, z1)
    L_fn = view.L1 if model_index == 1 else view.L2
    L_val = float(L_fn(theta)[0])
    w = (z1 - 1.0) if model_index == 1 else z1
    t = (w * L_val) / (np.sqrt(s_sq) * np.sqrt(sigma))
    inner = max(1.0 - t * t, CLAMP_EPS)
    return float(-0.5 * np.log(inner))
