"""Experiment sweeps: task grids, seed bookkeeping, CSV output, resume.

A sweep runs every (dimension, trial, method) combination, writing one
CSV row per trace row plus a JSON manifest holding the configuration and
every derived seed.  Output is byte-deterministic given the manifest:
rows are sorted canonically and floats are formatted with %.17g.  A
resumed sweep skips combinations already present in the CSV and rewrites
the file in canonical order.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tasks import TaskConfig, generate_task
from .trials import ALL_METHODS, MetricTrace, RunConfig, run_trial

__all__ = ["SweepConfig", "SweepResult", "sweep", "derive_task_seed", "derive_trial_seed",
           "CSV_COLUMNS", "format_rows", "CSV_HEADER"]

MANIFEST_SCHEMA = "bqselect-sweep-manifest-v1"

CSV_COLUMNS = (
    "d", "trial", "method", "iteration", "evals",
    "z1_hat", "z1_true", "frac_err", "abs_err_logbf", "correct_choice", "flags",
)
CSV_HEADER = ",".join(CSV_COLUMNS)

_TASK_TAG = 11
_TRIAL_TAG = 13


def derive_task_seed(master_seed: int, d: int, trial: int) -> int:
    return int(np.random.SeedSequence([master_seed, _TASK_TAG, d, trial]).generate_state(1)[0])


def derive_trial_seed(master_seed: int, d: int, trial: int, method: str) -> int:
    method_index = ALL_METHODS.index(method)
    return int(
        np.random.SeedSequence(
            [master_seed, _TRIAL_TAG, d, trial, method_index]
        ).generate_state(1)[0]
    )


@dataclass(frozen=True)
class SweepConfig:
    d_list: tuple[int, ...] = (1,)
    trials: int = 20
    methods: tuple[str, ...] = ("mi-z1", "round-robin-us", "bridge", "rjmcmc")
    master_seed: int = 0
    out_path: str = "results.csv"
    budget_per_d: dict | None = None  # d -> budget; default 50 d
    task: TaskConfig = field(default_factory=TaskConfig)
    run: RunConfig = field(default_factory=RunConfig)
    jobs: int = 1
    resume: bool = False

    def budget(self, d: int) -> int:
        if self.budget_per_d and d in self.budget_per_d:
            return int(self.budget_per_d[d])
        return 50 * d

    def manifest_path(self) -> Path:
        p = Path(self.out_path)
        return p.with_name(p.stem + ".manifest.json")


@dataclass(frozen=True)
class SweepResult:
    csv_path: Path
    manifest_path: Path
    rows_written: int
    n_failures: int


def _fmt_float(x: float) -> str:
    if isinstance(x, float) and np.isnan(x):
        return "nan"
    return format(float(x), ".17g")


def format_rows(trace: MetricTrace, trial: int) -> list[str]:
    """Render a trace to canonical CSV lines (no header)."""
    lines = []
    for r in trace.rows:
        correct = "" if r.correct_choice is None else ("true" if r.correct_choice else "false")
        lines.append(
            ",".join(
                (
                    str(trace.d),
                    str(trial),
                    trace.method,
                    str(r.iteration),
                    str(r.evals),
                    _fmt_float(r.z1_hat),
                    _fmt_float(r.z1_true),
                    _fmt_float(r.frac_err),
                    _fmt_float(r.abs_err_logbf),
                    correct,
                    ";".join(r.flags),
                )
            )
        )
    return lines


def _manifest_dict(cfg: SweepConfig) -> dict:
    from dataclasses import asdict

    seeds = {}
    for d in cfg.d_list:
        for trial in range(cfg.trials):
            key = f"d{d}-trial{trial}"
            seeds[key] = {
                "task_seed": derive_task_seed(cfg.master_seed, d, trial),
                "methods": {
                    m: derive_trial_seed(cfg.master_seed, d, trial, m) for m in cfg.methods
                },
            }
    return {
        "schema": MANIFEST_SCHEMA,
        "master_seed": cfg.master_seed,
        "d_list": list(cfg.d_list),
        "trials": cfg.trials,
        "methods": list(cfg.methods),
        "budgets": {str(d): cfg.budget(d) for d in cfg.d_list},
        "task_config": asdict(cfg.task),
        "run_config": asdict(cfg.run),
        "seeds": seeds,
    }


def _run_unit(args):
    """One (d, trial): generate the task once, run every method on it."""
    cfg, d, trial = args
    task_seed = derive_task_seed(cfg.master_seed, d, trial)
    task = generate_task(d, task_seed, cfg.task)
    out = []
    for method in cfg.methods:
        seed = derive_trial_seed(cfg.master_seed, d, trial, method)
        try:
            trace = run_trial(task, method, cfg.budget(d), seed, cfg.run)
            out.append((d, trial, method, format_rows(trace, trial), trace.n_failures))
        except Exception as exc:  # noqa: BLE001 - captured as a failure row
            line = ",".join(
                (str(d), str(trial), method, "0", "0", "nan", _fmt_float(task.true_z1),
                 "nan", "nan", "", f"error:{type(exc).__name__}")
            )
            out.append((d, trial, method, [line], 1))
    return out


def _existing_keys(path: Path) -> tuple[set, list[str]]:
    keys = set()
    lines = []
    if not path.exists():
        return keys, lines
    raw = path.read_text(encoding="utf-8").splitlines()
    for line in raw[1:]:
        if not line:
            continue
        parts = line.split(",", 3)
        keys.add((int(parts[0]), int(parts[1]), parts[2]))
        lines.append(line)
    return keys, lines


def _sort_key(cfg: SweepConfig):
    method_order = {m: i for i, m in enumerate(cfg.methods)}

    def key(line: str):
        parts = line.split(",")
        return (int(parts[0]), int(parts[1]), method_order.get(parts[2], len(method_order)),
                int(parts[3]), int(parts[4]))

    return key


def sweep(cfg: SweepConfig) -> SweepResult:
    """Run the full benchmark grid and write CSV + manifest.

    With ``resume=True``, combinations already present in the output CSV
    are skipped and the final file is rewritten in canonical order, so a
    resumed sweep is byte-identical to an uninterrupted one.
    """
    csv_path = Path(cfg.out_path)
    manifest_path = cfg.manifest_path()
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(
        json.dumps(_manifest_dict(cfg), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    done, lines = (set(), [])
    if cfg.resume:
        done, lines = _existing_keys(csv_path)

    units = [
        (cfg, d, trial)
        for d in cfg.d_list
        for trial in range(cfg.trials)
        if not all((d, trial, m) in done for m in cfg.methods)
    ]

    n_failures = 0
    results = []
    if cfg.jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            for unit_result in pool.map(_run_unit, units):
                results.append(unit_result)
    else:
        for unit in units:
            results.append(_run_unit(unit))

    for unit_result in results:
        for d, trial, method, new_lines, fails in unit_result:
            if (d, trial, method) in done:
                continue
            lines.extend(new_lines)
            n_failures += fails

    lines.sort(key=_sort_key(cfg))
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        for line in lines:
            fh.write(line + "\n")
    return SweepResult(csv_path, manifest_path, len(lines), n_failures)
