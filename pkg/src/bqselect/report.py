"""Aggregation of sweep CSVs into per-method error tables and tests."""

from __future__ import annotations

import numpy as np
import pandas as pd

from .selection import MI_Z1
from .stats import paired_t_test

__all__ = ["load_results", "final_errors", "summarize", "render_text"]


def load_results(path) -> pd.DataFrame:
    df = pd.read_csv(path, dtype={"flags": str}, keep_default_na=False, na_values=["nan"])
    df["flags"] = df["flags"].fillna("")
    return df


def final_errors(df: pd.DataFrame) -> pd.DataFrame:
    """Last finite-error row per (d, trial, method)."""
    ok = df[np.isfinite(df["frac_err"])]
    if ok.empty:
        return ok
    idx = ok.groupby(["d", "trial", "method"])["evals"].idxmax()
    return ok.loc[idx].reset_index(drop=True)


def _method_summary(group: pd.DataFrame) -> dict:
    q1, med, q3 = np.percentile(group["frac_err"], [25, 50, 75])
    abs_bf = group["abs_err_logbf"][np.isfinite(group["abs_err_logbf"])]
    return {
        "trials": int(len(group)),
        "median_frac_err": float(med),
        "iqr_frac_err": [float(q1), float(q3)],
        "median_abs_err_logbf": float(np.median(abs_bf)) if len(abs_bf) else float("nan"),
        "correct_fraction": float((group["correct_choice"] == "true").mean()),
    }


def summarize(df: pd.DataFrame, reference_method: str = MI_Z1) -> dict:
    """Per-(d, method) medians/IQRs plus one-sided paired t-tests.

    Each test asks whether the reference method's final fractional
    errors are smaller than another method's, paired by trial over the
    trials where both produced estimates.
    """
    finals = final_errors(df)
    failures = df[df["flags"].str.startswith("error", na=False)]
    out: dict = {"per_method": {}, "t_tests": {}, "n_failure_rows": int(len(failures))}
    for (d, method), group in finals.groupby(["d", "method"]):
        out["per_method"][f"d={d}/{method}"] = _method_summary(group)
    for d, by_d in finals.groupby("d"):
        if reference_method not in set(by_d["method"]):
            continue
        ref = by_d[by_d["method"] == reference_method].set_index("trial")["frac_err"]
        for method in sorted(set(by_d["method"]) - {reference_method}):
            other = by_d[by_d["method"] == method].set_index("trial")["frac_err"]
            common = ref.index.intersection(other.index)
            if len(common) < 2:
                continue
            res = paired_t_test(ref.loc[common].to_numpy(), other.loc[common].to_numpy())
            out["t_tests"][f"d={d}/{reference_method}<{method}"] = {
                "t": res.t_statistic,
                "p_one_sided": res.p_one_sided,
                "pairs": int(len(common)),
                "degenerate": res.degenerate,
            }
    return out


def render_text(summary: dict) -> str:
    lines = ["per-method final fractional error (median [IQR]), correct-choice fraction:"]
    for key in sorted(summary["per_method"]):
        s = summary["per_method"][key]
        q1, q3 = s["iqr_frac_err"]
        lines.append(
            f"  {key:28s} n={s['trials']:3d}  frac_err={s['median_frac_err']:.4f} "
            f"[{q1:.4f}, {q3:.4f}]  |log BF err|={s['median_abs_err_logbf']:.3f}  "
            f"correct={s['correct_fraction']:.2f}"
        )
    if summary["t_tests"]:
        lines.append("one-sided paired t-tests (reference < other):")
        for key in sorted(summary["t_tests"]):
            t = summary["t_tests"][key]
            flag = " (degenerate)" if t["degenerate"] else ""
            lines.append(
                f"  {key:34s} t={t['t']:+.3f}  p={t['p_one_sided']:.4g}  "
                f"pairs={t['pairs']}{flag}"
            )
    lines.append(f"failure rows: {summary['n_failure_rows']}")
    return "\n".join(lines)
