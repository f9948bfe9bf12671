"""Paired comparison statistics for benchmark traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["TTestResult", "paired_t_test"]


@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_one_sided: float
    df: int
    degenerate: bool = False


def paired_t_test(errors_a, errors_b) -> TTestResult:
    """One-sided paired t-test of H1: mean(a) < mean(b).

    Inputs are paired by position (one entry per trial).  Small p-values
    support a < b.  Zero-variance differences are degenerate: p collapses
    to 0 or 1 by the sign of the mean difference (0.5 for identical
    vectors), flagged in the result.
    """
    a = np.asarray(errors_a, dtype=float)
    b = np.asarray(errors_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired vectors must be 1-D with equal lengths")
    n = a.shape[0]
    if n < 2:
        raise ValueError("need at least 2 pairs")
    diff = a - b
    mean = float(diff.mean())
    sd = float(diff.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean < 0:
            return TTestResult(float("-inf"), 0.0, df, degenerate=True)
        if mean > 0:
            return TTestResult(float("inf"), 1.0, df, degenerate=True)
        return TTestResult(0.0, 0.5, df, degenerate=True)
    t = mean / (sd / np.sqrt(n))
    p = float(stats.t.cdf(t, df))
    return TTestResult(float(t), p, df)
