"""Parameter priors over model parameter spaces.

Two analytic families are supported: independent (diagonal) Gaussians and
uniform boxes.  Both integrate to one by construction and support exact
i.i.d. sampling, low-discrepancy (Halton) sampling, density evaluation,
and an affine map to normalized coordinates used by the acquisition
optimizer and the duplicate-location guard.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.stats import qmc

__all__ = ["DiagonalGaussianPrior", "UniformBoxPrior"]

_LOG_2PI = np.log(2.0 * np.pi)


def _as_2d(theta, dim):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim == 1:
        theta = theta[None, :]
    if theta.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {theta.shape}")
    return theta


@dataclass(frozen=True)
class DiagonalGaussianPrior:
    """Independent Gaussian prior, one (loc, scale) pair per dimension."""

    loc: np.ndarray
    scale: np.ndarray
    kind: str = field(default="diagonal_gaussian", init=False)

    def __post_init__(self):
        object.__setattr__(self, "loc", np.atleast_1d(np.asarray(self.loc, dtype=float)))
        object.__setattr__(self, "scale", np.atleast_1d(np.asarray(self.scale, dtype=float)))
        if self.loc.shape != self.scale.shape:
            raise ValueError("loc and scale must have matching shapes")
        if not np.all(np.isfinite(self.loc)) or not np.all(np.isfinite(self.scale)):
            raise ValueError("prior parameters must be finite")
        if np.any(self.scale <= 0):
            raise ValueError("prior scales must be positive")

    @property
    def dim(self) -> int:
        return self.loc.shape[0]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.loc + self.scale * rng.standard_normal((n, self.dim))

    def sample_low_discrepancy(self, n: int, seed: int) -> np.ndarray:
        u = qmc.Halton(d=self.dim, seed=seed).random(n)
        return self.loc + self.scale * stats.norm.ppf(u)

    def log_density(self, theta) -> np.ndarray:
        theta = _as_2d(theta, self.dim)
        z = (theta - self.loc) / self.scale
        return -0.5 * (z**2).sum(axis=1) - np.log(self.scale).sum() - 0.5 * self.dim * _LOG_2PI

    def to_normalized(self, theta) -> np.ndarray:
        return (_as_2d(theta, self.dim) - self.loc) / self.scale

    def from_normalized(self, u) -> np.ndarray:
        return self.loc + self.scale * _as_2d(u, self.dim)

    def normalized_bounds(self) -> list[tuple[float, float]]:
        # +/- 6 sigma is wide enough for any acquisition argmax in practice
        return [(-6.0, 6.0)] * self.dim


@dataclass(frozen=True)
class UniformBoxPrior:
    """Uniform prior on an axis-aligned box."""

    lower: np.ndarray
    upper: np.ndarray
    kind: str = field(default="uniform_box", init=False)

    def __post_init__(self):
        object.__setattr__(self, "lower", np.atleast_1d(np.asarray(self.lower, dtype=float)))
        object.__setattr__(self, "upper", np.atleast_1d(np.asarray(self.upper, dtype=float)))
        if self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must have matching shapes")
        if not np.all(np.isfinite(self.lower)) or not np.all(np.isfinite(self.upper)):
            raise ValueError("box bounds must be finite")
        if np.any(self.upper <= self.lower):
            raise ValueError("upper bounds must exceed lower bounds")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.lower + self.widths * rng.random((n, self.dim))

    def sample_low_discrepancy(self, n: int, seed: int) -> np.ndarray:
        u = qmc.Halton(d=self.dim, seed=seed).random(n)
        return self.lower + self.widths * u

    def log_density(self, theta) -> np.ndarray:
        theta = _as_2d(theta, self.dim)
        inside = np.all((theta >= self.lower) & (theta <= self.upper), axis=1)
        out = np.full(theta.shape[0], -np.inf)
        out[inside] = -np.log(self.widths).sum()
        return out

    def to_normalized(self, theta) -> np.ndarray:
        return (_as_2d(theta, self.dim) - self.lower) / self.widths

    def from_normalized(self, u) -> np.ndarray:
        return self.lower + self.widths * _as_2d(u, self.dim)

    def normalized_bounds(self) -> list[tuple[float, float]]:
        return [(0.0, 1.0)] * self.dim
