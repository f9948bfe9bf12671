"""Surrogate beliefs over a model's likelihood surface.

``WarpedSurrogate`` holds a GP over the *log* likelihood together with
the moment-matched (lognormal) mean and covariance of the implied belief
over the likelihood itself.  ``LinearSurrogate`` wraps a GP placed
directly on the likelihood; it exists for testing against closed-form
quadrature identities and for toy scenarios.

All likelihood bookkeeping is relative to a per-model log offset
(``log_offset``): a surrogate with offset c models likelihood * exp(-c).
Offsets are reconciled once, when beliefs from two models are combined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gp import GaussianProcessPosterior

__all__ = ["LinearSurrogate", "WarpedSurrogate", "warp_moment_match"]

# largest exponent fed to np.exp before results risk overflowing downstream
# products; quadrature re-centers beliefs that would exceed it
EXP_CAP = 700.0


def _capped_exp(x):
    return np.exp(np.minimum(x, EXP_CAP))


@dataclass(frozen=True)
class LinearSurrogate:
    """Identity-warp surrogate: moments are the GP's own moments."""

    gp: GaussianProcessPosterior
    log_offset: float = 0.0

    warped: bool = False

    @property
    def n_observations(self) -> int:
        return self.gp.n_observations

    @property
    def observed_locations(self) -> np.ndarray:
        return self.gp.obs_locations

    @property
    def input_dim(self) -> int:
        return self.gp.input_dim

    def mean(self, T) -> np.ndarray:
        return self.gp.mean(T)

    def cov(self, T, S=None) -> np.ndarray:
        return self.gp.cov(T, S)

    def var(self, T) -> np.ndarray:
        return self.gp.var(T)


@dataclass(frozen=True)
class WarpedSurrogate:
    """Lognormal moment-matched belief induced by a GP on the log likelihood.

    With latent posterior mean g(x) and covariance C(x, x'):

        mean(x)     = exp(g(x) + C(x, x)/2)
        cov(x, x')  = exp(g(x) + g(x') + (C(x,x) + C(x',x'))/2) * (exp(C(x,x')) - 1)

    so mean is positive everywhere and cov(x, x) is the lognormal
    variance exp(2 g + C) (exp(C) - 1).
    """

    log_gp: GaussianProcessPosterior
    log_offset: float = 0.0

    warped: bool = True

    @property
    def gp(self) -> GaussianProcessPosterior:
        return self.log_gp

    @property
    def n_observations(self) -> int:
        return self.log_gp.n_observations

    @property
    def observed_locations(self) -> np.ndarray:
        return self.log_gp.obs_locations

    @property
    def input_dim(self) -> int:
        return self.log_gp.input_dim

    def latent_moments(self, T):
        """Latent (log-space) posterior mean and variance at T."""
        return self.log_gp.mean(T), self.log_gp.var(T)

    def log_mean(self, T) -> np.ndarray:
        g, v = self.latent_moments(T)
        return g + 0.5 * v

    def mean(self, T) -> np.ndarray:
        return _capped_exp(self.log_mean(T))

    def var(self, T) -> np.ndarray:
        g, v = self.latent_moments(T)
        return _capped_exp(2.0 * g + v) * np.expm1(v)

    def log_var(self, T) -> np.ndarray:
        """log of var(T); -inf where the latent variance is zero."""
        g, v = self.latent_moments(T)
        with np.errstate(divide="ignore"):
            # log(expm1(v)) == v to double precision once v > ~36
            tail = np.where(v > 36.0, v, np.log(np.expm1(np.minimum(v, 36.0))))
        return 2.0 * g + v + tail

    def cov(self, T, S=None) -> np.ndarray:
        eta_t = self.log_mean(T)
        eta_s = eta_t if S is None else self.log_mean(S)
        C = self.log_gp.cov(T, S)
        out = _capped_exp(eta_t[:, None] + eta_s[None, :]) * np.expm1(C)
        if S is None:
            out = 0.5 * (out + out.T)
        return out


def warp_moment_match(log_gp: GaussianProcessPosterior, log_offset: float = 0.0) -> WarpedSurrogate:
    """Moment-matched likelihood belief from a GP over the log likelihood."""
    return WarpedSurrogate(log_gp=log_gp, log_offset=float(log_offset))
