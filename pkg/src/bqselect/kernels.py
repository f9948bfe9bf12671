"""Stationary covariance functions with per-dimension (ARD) length-scales."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SQUARED_EXPONENTIAL",
    "MATERN32",
    "MATERN52",
    "KERNEL_FAMILIES",
    "Kernel",
    "gram",
    "cross_gram",
]

SQUARED_EXPONENTIAL = "squared_exponential"
MATERN32 = "matern32"
MATERN52 = "matern52"
KERNEL_FAMILIES = (SQUARED_EXPONENTIAL, MATERN32, MATERN52)

_SQRT3 = np.sqrt(3.0)
_SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class Kernel:
    """A kernel family plus its hyperparameters.

    ``output_scale`` is the signal variance, so k(x, x) == output_scale
    for every family here.
    """

    family: str
    output_scale: float
    length_scales: np.ndarray

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; use one of {KERNEL_FAMILIES}")
        object.__setattr__(
            self, "length_scales", np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        )
        if not np.isfinite(self.output_scale) or self.output_scale <= 0:
            raise ValueError(f"output_scale must be a positive finite real, got {self.output_scale}")
        if not np.all(np.isfinite(self.length_scales)) or np.any(self.length_scales <= 0):
            raise ValueError("all length_scales must be positive finite reals")

    @property
    def dim(self) -> int:
        return self.length_scales.shape[0]


def _check_points(X, dim, name):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"{name} must be (n, {dim}), got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        bad = int(np.count_nonzero(~np.isfinite(X)))
        raise ValueError(f"{name} contains {bad} non-finite entries")
    return X


def _scaled_sqdist(Xs, Zs):
    # |x|^2 + |z|^2 - 2 x.z, clipped: rounding can push tiny distances negative
    d2 = (
        (Xs**2).sum(axis=1)[:, None]
        + (Zs**2).sum(axis=1)[None, :]
        - 2.0 * (Xs @ Zs.T)
    )
    return np.maximum(d2, 0.0)


def cross_gram(kernel: Kernel, X, Z) -> np.ndarray:
    """Covariance matrix between two point sets, shape (len(X), len(Z))."""
    X = _check_points(X, kernel.dim, "X")
    Z = _check_points(Z, kernel.dim, "Z")
    Xs = X / kernel.length_scales
    Zs = Z / kernel.length_scales
    d2 = _scaled_sqdist(Xs, Zs)
    if kernel.family == SQUARED_EXPONENTIAL:
        k = np.exp(-0.5 * d2)
    elif kernel.family == MATERN32:
        r = np.sqrt(d2)
        k = (1.0 + _SQRT3 * r) * np.exp(-_SQRT3 * r)
    else:
        r = np.sqrt(d2)
        k = (1.0 + _SQRT5 * r + (5.0 / 3.0) * d2) * np.exp(-_SQRT5 * r)
    return kernel.output_scale * k


def gram(kernel: Kernel, X) -> np.ndarray:
    """Symmetric PSD Gram matrix with diagonal equal to ``output_scale``."""
    K = cross_gram(kernel, X, X)
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, kernel.output_scale)
    return K
