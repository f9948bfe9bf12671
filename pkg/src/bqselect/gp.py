"""Gaussian-process regression: conditioning and hyperparameter fitting.

Observations are treated as noiseless function evaluations; a small
jitter on the Gram diagonal keeps Cholesky factorizations stable.  The
constant prior mean is profiled out in closed form (its generalized
least-squares estimate) rather than optimized numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla
from scipy import optimize

from .errors import NumericsError
from .kernels import Kernel, cross_gram, gram

__all__ = [
    "GaussianProcessPosterior",
    "gp_condition",
    "log_marginal_likelihood",
    "median_heuristic_length_scales",
    "FitConfig",
    "FitResult",
    "fit_hyperparameters",
]

JITTER_SCALE = 1e-10  # initial jitter, as a fraction of output_scale
MAX_JITTER_DOUBLINGS = 20


def _cholesky_with_escalation(K: np.ndarray, output_scale: float):
    """Cholesky of K + jitter*I, doubling jitter until it succeeds.

    Returns (lower_factor, jitter_used).  Raises NumericsError carrying a
    condition-number estimate once the doubling cap is exhausted.
    """
    jitter = JITTER_SCALE * output_scale
    n = K.shape[0]
    eye = np.eye(n)
    for _ in range(MAX_JITTER_DOUBLINGS + 1):
        try:
            L = np.linalg.cholesky(K + jitter * eye)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter *= 2.0
    try:
        cond = float(np.linalg.cond(K))
    except np.linalg.LinAlgError:
        cond = float("inf")
    raise NumericsError(
        f"Cholesky failed after {MAX_JITTER_DOUBLINGS} jitter doublings "
        f"(final jitter {jitter:.3e}); condition estimate {cond:.3e}",
        condition_estimate=cond,
    )


@dataclass(frozen=True)
class GaussianProcessPosterior:
    """A GP conditioned on noiseless observations.

    Immutable after construction; all query methods are pure and safe to
    call concurrently.
    """

    kernel: Kernel
    mean_const: float
    obs_locations: np.ndarray  # (n, d)
    obs_values: np.ndarray  # (n,)
    noise_jitter: float
    cholesky_factor: np.ndarray | None  # lower triangular, None when n == 0
    _alpha: np.ndarray = field(repr=False, default=None)  # K^{-1} (y - mean)

    @property
    def n_observations(self) -> int:
        return self.obs_locations.shape[0]

    @property
    def input_dim(self) -> int:
        return self.kernel.dim

    def mean(self, T) -> np.ndarray:
        T = np.atleast_2d(np.asarray(T, dtype=float))
        if self.n_observations == 0:
            return np.full(T.shape[0], self.mean_const)
        k = cross_gram(self.kernel, T, self.obs_locations)
        return self.mean_const + k @ self._alpha

    def cov(self, T, S=None) -> np.ndarray:
        T = np.atleast_2d(np.asarray(T, dtype=float))
        sym = S is None
        S2 = T if sym else np.atleast_2d(np.asarray(S, dtype=float))
        prior = gram(self.kernel, T) if sym else cross_gram(self.kernel, T, S2)
        if self.n_observations == 0:
            return prior
        kt = cross_gram(self.kernel, T, self.obs_locations)
        vt = sla.solve_triangular(self.cholesky_factor, kt.T, lower=True)
        if sym:
            C = prior - vt.T @ vt
            return 0.5 * (C + C.T)
        ks = cross_gram(self.kernel, S2, self.obs_locations)
        vs = sla.solve_triangular(self.cholesky_factor, ks.T, lower=True)
        return prior - vt.T @ vs

    def var(self, T) -> np.ndarray:
        T = np.atleast_2d(np.asarray(T, dtype=float))
        if self.n_observations == 0:
            return np.full(T.shape[0], self.kernel.output_scale)
        kt = cross_gram(self.kernel, T, self.obs_locations)
        vt = sla.solve_triangular(self.cholesky_factor, kt.T, lower=True)
        v = self.kernel.output_scale - (vt**2).sum(axis=0)
        return np.maximum(v, 0.0)

    def cov_with_fixed(self, S):
        """Cross-covariance function T -> cov(T, S) for a fixed point set S.

        The S-side triangular solve is done once here, which matters when
        the same node set is queried repeatedly (quadrature profiles
        inside acquisition optimization).
        """
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if self.n_observations == 0:
            return lambda T: cross_gram(self.kernel, T, S)
        vs = sla.solve_triangular(
            self.cholesky_factor, cross_gram(self.kernel, S, self.obs_locations).T, lower=True
        )

        def cross(T):
            prior = cross_gram(self.kernel, T, S)
            kt = cross_gram(self.kernel, T, self.obs_locations)
            vt = sla.solve_triangular(self.cholesky_factor, kt.T, lower=True)
            return prior - vt.T @ vs

        return cross

    def query_with_fixed(self, S):
        """Fused query T -> (mean, var, cov(T, S)) sharing kernel evaluations."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        if self.n_observations == 0:
            return lambda T: (
                np.full(np.atleast_2d(T).shape[0], self.mean_const),
                np.full(np.atleast_2d(T).shape[0], self.kernel.output_scale),
                cross_gram(self.kernel, np.atleast_2d(T), S),
            )
        vs = sla.solve_triangular(
            self.cholesky_factor, cross_gram(self.kernel, S, self.obs_locations).T, lower=True
        )

        def query(T):
            T = np.atleast_2d(np.asarray(T, dtype=float))
            kt = cross_gram(self.kernel, T, self.obs_locations)
            vt = sla.solve_triangular(self.cholesky_factor, kt.T, lower=True)
            mean = self.mean_const + kt @ self._alpha
            var = np.maximum(self.kernel.output_scale - (vt**2).sum(axis=0), 0.0)
            cross = cross_gram(self.kernel, T, S) - vt.T @ vs
            return mean, var, cross

        return query


def gp_condition(kernel: Kernel, mean_const: float, X, y, min_separation: float | None = None):
    """Condition a constant-mean GP prior on noiseless observations.

    Parameters
    ----------
    min_separation : optional
        When given, reject observation sets containing a pair of rows
        closer than this Euclidean distance (duplicate guard).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y must have matching leading dimensions")
    if X.size and not np.all(np.isfinite(X)):
        raise ValueError("observation locations must be finite")
    if y.size and not np.all(np.isfinite(y)):
        raise ValueError("observation values must be finite")
    if X.shape[0] == 0:
        return GaussianProcessPosterior(kernel, float(mean_const), X.reshape(0, kernel.dim),
                                        y, 0.0, None, None)
    if min_separation is not None and X.shape[0] > 1:
        d2 = ((X[:, None, :] - X[None, :, :]) ** 2).sum(axis=-1)
        np.fill_diagonal(d2, np.inf)
        if np.min(d2) < min_separation**2:
            i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)
            raise ValueError(
                f"observations {i} and {j} are closer than min_separation={min_separation}"
            )
    K = gram(kernel, X)
    L, jitter = _cholesky_with_escalation(K, kernel.output_scale)
    alpha = sla.cho_solve((L, True), y - mean_const)
    return GaussianProcessPosterior(kernel, float(mean_const), X, y, jitter, L, alpha)


def log_marginal_likelihood(kernel: Kernel, mean_const: float, X, y) -> float:
    """Log density of y under the GP prior (noiseless, jittered)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    K = gram(kernel, X)
    L, _ = _cholesky_with_escalation(K, kernel.output_scale)
    resid = y - mean_const
    alpha = sla.cho_solve((L, True), resid)
    return float(
        -0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * np.log(2.0 * np.pi)
    )


def median_heuristic_length_scales(X) -> np.ndarray:
    """Per-dimension median of nonzero pairwise absolute differences."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    out = np.ones(d)
    if n < 2:
        return out
    for j in range(d):
        diffs = np.abs(X[:, j][:, None] - X[:, j][None, :])
        vals = diffs[np.triu_indices(n, k=1)]
        vals = vals[vals > 0]
        if vals.size:
            out[j] = np.median(vals)
    return out


@dataclass(frozen=True)
class FitConfig:
    """Multi-start MAP optimization settings for GP hyperparameters."""

    n_restarts: int = 8
    seed: int = 0
    objective_tol: float = 1e-6
    max_evals: int = 400
    restart_spread: float = 0.75  # stddev of log-space perturbations around the heuristic start
    prior_sd_log_length: float = 1.0
    prior_sd_log_output: float = 2.0
    log_bounds: tuple[float, float] = (-18.0, 12.0)


@dataclass(frozen=True)
class FitResult:
    kernel: Kernel
    mean_const: float
    log_marginal: float
    penalized_log_marginal: float
    used_fallback: bool


def _profiled_mean(L: np.ndarray, y: np.ndarray) -> float:
    # GLS estimate of a constant mean: (1' K^-1 y) / (1' K^-1 1)
    ones = np.ones_like(y)
    kinv_y = sla.cho_solve((L, True), y)
    kinv_1 = sla.cho_solve((L, True), ones)
    denom = ones @ kinv_1
    if denom <= 0:
        return float(np.mean(y))
    return float((ones @ kinv_y) / denom)


def fit_hyperparameters(X, y, kernel_family: str, fit_config: FitConfig | None = None) -> FitResult:
    """MAP kernel hyperparameters by multi-start local search.

    The objective is the log marginal likelihood plus weak Gaussian
    penalties on the log output scale and log length-scales, centered at
    data-driven heuristics.  The constant mean is profiled out at every
    objective evaluation.  Deterministic given ``fit_config.seed``; the
    restart list is nested, so more restarts can only improve the
    optimum.  If every start fails numerically, the heuristic
    hyperparameters are returned with ``used_fallback`` set.
    """
    cfg = fit_config or FitConfig()
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n, d = X.shape
    if n < 2:
        raise ValueError("hyperparameter fitting needs at least 2 observations")

    # canonicalize row order so the fit is exactly permutation invariant
    order = np.lexsort(np.concatenate([X.T[::-1], y[None, :]], axis=0))
    X = X[order]
    y = y[order]

    ls0 = median_heuristic_length_scales(X)
    var_y = float(np.var(y))
    os0 = max(var_y, 1e-8)
    start0 = np.concatenate([[np.log(os0)], np.log(ls0)])
    lo, hi = cfg.log_bounds

    def objective(p):
        p = np.clip(p, lo, hi)
        try:
            kern = Kernel(kernel_family, float(np.exp(p[0])), np.exp(p[1:]))
            K = gram(kern, X)
            L, _ = _cholesky_with_escalation(K, kern.output_scale)
            mc = _profiled_mean(L, y)
            resid = y - mc
            alpha = sla.cho_solve((L, True), resid)
            lml = -0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * np.log(2 * np.pi)
        except (NumericsError, np.linalg.LinAlgError, FloatingPointError):
            return np.inf
        if not np.isfinite(lml):
            return np.inf
        pen = (
            -0.5 * ((p[0] - start0[0]) / cfg.prior_sd_log_output) ** 2
            - 0.5 * (((p[1:] - start0[1:]) / cfg.prior_sd_log_length) ** 2).sum()
        )
        return -(lml + pen)

    rng = np.random.default_rng(cfg.seed)
    starts = [start0]
    for _ in range(max(cfg.n_restarts, 1) - 1):
        starts.append(start0 + cfg.restart_spread * rng.standard_normal(d + 1))

    best_p, best_obj = None, np.inf
    for s in starts:
        res = optimize.minimize(
            objective,
            s,
            method="Nelder-Mead",
            options={
                "fatol": cfg.objective_tol,
                "xatol": 1e-4,
                "maxfev": cfg.max_evals,
                "disp": False,
            },
        )
        if np.isfinite(res.fun) and res.fun < best_obj:
            best_obj, best_p = float(res.fun), np.clip(res.x, lo, hi)

    if best_p is None:
        kern = Kernel(kernel_family, os0, ls0)
        K = gram(kern, X)
        L, _ = _cholesky_with_escalation(K, kern.output_scale)
        mc = _profiled_mean(L, y)
        lml = log_marginal_likelihood(kern, mc, X, y)
        return FitResult(kern, mc, lml, -np.inf, used_fallback=True)

    kern = Kernel(kernel_family, float(np.exp(best_p[0])), np.exp(best_p[1:]))
    K = gram(kern, X)
    L, _ = _cholesky_with_escalation(K, kern.output_scale)
    mc = _profiled_mean(L, y)
    lml = log_marginal_likelihood(kern, mc, X, y)
    return FitResult(kern, mc, lml, -best_obj, used_fallback=False)
