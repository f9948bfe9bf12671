"""Active-learning loop over two candidate models.

Owns initialization, budget accounting, surrogate and belief updates,
and per-iteration estimate snapshots.  The budget counts active
(post-initialization) likelihood evaluations; the experiment harness is
responsible for translating a total-evaluation budget into an active
one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .acquisition import (
    AcquisitionConfig,
    PosteriorProbabilityBelief,
    sample_z1,
    select_next,
    select_next_model_choice,
    uncertainty_sampling,
)
from .errors import BudgetExhaustedError, DegenerateBeliefError, EvaluationError
from .evidence import QuadratureConfig, evidence_belief, joint_view
from .gp import FitConfig, fit_hyperparameters, gp_condition, _cholesky_with_escalation, _profiled_mean
from .kernels import MATERN32, Kernel, gram
from .warp import warp_moment_match

__all__ = [
    "MI_Z1",
    "MI_MODEL_CHOICE",
    "ROUND_ROBIN_US",
    "POLICIES",
    "ModelSpec",
    "SelectionConfig",
    "SelectionState",
    "EstimateSnapshot",
    "initialize",
    "step",
    "run_selection",
    "posterior_probability",
]

MI_Z1 = "mi-z1"
MI_MODEL_CHOICE = "mi-model-choice"
ROUND_ROBIN_US = "round-robin-us"
POLICIES = (MI_Z1, MI_MODEL_CHOICE, ROUND_ROBIN_US)

_TAG_INIT, _TAG_FIT, _TAG_NODES, _TAG_Z, _TAG_ACQ = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class ModelSpec:
    """A candidate model: parameter prior plus a log-likelihood evaluator.

    ``log_likelihood`` must be a pure deterministic function of a
    parameter vector returning a finite log-likelihood on the prior
    support.  ``log_likelihood_batch`` optionally vectorizes it over an
    (n, dim) array for Monte Carlo estimators.
    """

    name: str
    dim: int
    prior: object
    log_likelihood: Callable[[np.ndarray], float]
    kernel_family: str = MATERN32
    log_likelihood_batch: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("model dimension must be at least 1")
        if self.prior.dim != self.dim:
            raise ValueError("prior dimension does not match the model dimension")


@dataclass(frozen=True)
class SelectionConfig:
    quad: QuadratureConfig = field(default_factory=QuadratureConfig)
    acq: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    fit: FitConfig = field(default_factory=FitConfig)
    z_sample_count: int = 10_000
    refit_every: int = 1


@dataclass
class _ModelState:
    spec: ModelSpec
    thetas: np.ndarray  # (n, d) raw parameter vectors
    log_liks: np.ndarray  # (n,) raw log-likelihood values
    kernel: Kernel | None = None
    mean_const: float = 0.0
    fit_epoch: int = 0
    since_refit: int = 0
    surrogate: object = None
    belief: object = None
    fit_fallback: bool = False


@dataclass(frozen=True)
class EstimateSnapshot:
    """Per-iteration evidence and posterior-probability estimates.

    ``m1 .. K2`` are the reconciled (common log offset) evidence
    moments; ``z1_plugin`` is m1/(m1+m2) computed in log space and
    ``z1_mean`` is the Monte Carlo posterior mean from the z1 sampler.
    """

    iteration: int
    m1: float
    m2: float
    K1: float
    K2: float
    z1_plugin: float
    z1_mean: float
    log_bayes_factor: float
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "m1": self.m1,
            "m2": self.m2,
            "K1": self.K1,
            "K2": self.K2,
            "z1_plugin": self.z1_plugin,
            "z1_mean": self.z1_mean,
            "log_bayes_factor": self.log_bayes_factor,
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EstimateSnapshot":
        return cls(
            iteration=int(d["iteration"]),
            m1=float(d["m1"]),
            m2=float(d["m2"]),
            K1=float(d["K1"]),
            K2=float(d["K2"]),
            z1_plugin=float(d["z1_plugin"]),
            z1_mean=float(d["z1_mean"]),
            log_bayes_factor=float(d["log_bayes_factor"]),
            flags=tuple(d.get("flags", ())),
        )


@dataclass
class SelectionState:
    """Mutable loop state; single-owner, mutated by ``step`` only."""

    models: tuple[ModelSpec, ModelSpec]
    config: SelectionConfig
    seed: int
    budget: int  # active (post-initialization) evaluations allowed
    init_count: int
    model_states: list[_ModelState]
    view: object = None
    z_belief: PosteriorProbabilityBelief | None = None
    history: list[tuple[int, int, np.ndarray, float]] = field(default_factory=list)
    active_steps: int = 0
    last_flags: tuple[str, ...] = ()

    @property
    def evaluations_used(self) -> int:
        return len(self.history)

    @property
    def surrogates(self):
        return tuple(ms.surrogate for ms in self.model_states)

    @property
    def evidence_beliefs(self):
        return tuple(ms.belief for ms in self.model_states)


def _stream(seed, tag, *rest) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(tag), *map(int, rest)])


def _evaluate_with_redraw(spec: ModelSpec, rng: np.random.Generator, max_redraws: int = 10):
    for _ in range(max_redraws):
        theta = spec.prior.sample(1, rng)[0]
        value = float(spec.log_likelihood(theta))
        if np.isfinite(value):
            return theta, value
    raise EvaluationError(
        f"model {spec.name!r}: log-likelihood non-finite after {max_redraws} prior draws"
    )


def _rebuild_model(ms: _ModelState, config: SelectionConfig, seed: int, refit: bool) -> None:
    # streams are keyed by epoch but shared across models (common random
    # numbers): identical models with a shared seed stay exactly symmetric
    c = float(np.max(ms.log_liks))
    y_centered = ms.log_liks - c
    if refit or ms.kernel is None:
        fit_seed = int(_stream(seed, _TAG_FIT, ms.fit_epoch + 1).generate_state(1)[0])
        result = fit_hyperparameters(
            ms.thetas, y_centered, ms.spec.kernel_family, replace(config.fit, seed=fit_seed)
        )
        ms.kernel = result.kernel
        ms.mean_const = result.mean_const
        ms.fit_fallback = result.used_fallback
        ms.fit_epoch += 1
        ms.since_refit = 0
    else:
        # keep the kernel, re-profile the constant mean on the re-centered values
        K = gram(ms.kernel, ms.thetas)
        L, _ = _cholesky_with_escalation(K, ms.kernel.output_scale)
        ms.mean_const = _profiled_mean(L, y_centered)
    log_gp = gp_condition(ms.kernel, ms.mean_const, ms.thetas, y_centered)
    ms.surrogate = warp_moment_match(log_gp, log_offset=c)
    node_seed = int(_stream(seed, _TAG_NODES, ms.fit_epoch).generate_state(1)[0])
    ms.belief = evidence_belief(ms.surrogate, ms.spec.prior, replace(config.quad, seed=node_seed))


def _refresh_posterior(state: SelectionState, iteration: int) -> tuple[str, ...]:
    flags = []
    state.view = joint_view(state.model_states[0].belief, state.model_states[1].belief)
    if state.view.degenerate:
        flags.append("view_degenerate")
    z_seed = _stream(state.seed, _TAG_Z, iteration)
    try:
        state.z_belief = sample_z1(state.view, state.config.z_sample_count, z_seed)
    except DegenerateBeliefError:
        dominant = state.view.dominant
        if dominant is None:
            lam1 = state.view.log_mean1
            lam2 = state.view.log_mean2
            dominant = 1 if lam1 >= lam2 else 2
        value = 1.0 if dominant == 1 else 0.0
        state.z_belief = PosteriorProbabilityBelief(
            np.full(state.config.z_sample_count, value), state.config.z_sample_count, True, 0
        )
        flags.append("z_sampling_degenerate")
    if state.z_belief.degenerate_flag:
        flags.append("z_degenerate")
    return tuple(flags)


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def _snapshot(state: SelectionState, iteration: int, extra_flags=()) -> EstimateSnapshot:
    view = state.view
    flags = list(extra_flags)
    lam1, lam2 = view.log_mean1, view.log_mean2
    if np.isfinite(lam1) and np.isfinite(lam2):
        log_bf = lam1 - lam2
        z_plugin = _sigmoid(log_bf)
    elif np.isfinite(lam1) or np.isfinite(lam2):
        log_bf = np.inf if np.isfinite(lam1) else -np.inf
        z_plugin = 1.0 if np.isfinite(lam1) else 0.0
        flags.append("evidence_mean_nonpositive")
    else:
        log_bf = float("nan")
        z_plugin = float("nan")
        flags.append("evidence_mean_nonpositive")
    return EstimateSnapshot(
        iteration=iteration,
        m1=view.m1,
        m2=view.m2,
        K1=view.K1,
        K2=view.K2,
        z1_plugin=z_plugin,
        z1_mean=state.z_belief.mean,
        log_bayes_factor=float(log_bf),
        flags=tuple(flags),
    )


def current_snapshot(state: SelectionState) -> EstimateSnapshot:
    """Estimate snapshot of the state as it stands (no new evaluation)."""
    return _snapshot(state, state.active_steps, state.last_flags)


def initialize(models, init_count_per_model: int, seed: int, budget: int = 0,
               config: SelectionConfig | None = None) -> SelectionState:
    """Draw initial prior samples per model, fit surrogates, build beliefs.

    Non-finite log-likelihood values are redrawn up to ten times per
    point before raising.  Fully deterministic given ``seed``.
    """
    if init_count_per_model < 2:
        raise ValueError("need at least 2 initialization evaluations per model")
    config = config or SelectionConfig()
    models = tuple(models)
    if len(models) != 2:
        raise ValueError("exactly two candidate models are supported")

    model_states = []
    history = []
    for model_index, spec in enumerate(models, start=1):
        rng = np.random.default_rng(_stream(seed, _TAG_INIT))
        thetas, values = [], []
        for _ in range(init_count_per_model):
            theta, value = _evaluate_with_redraw(spec, rng)
            thetas.append(theta)
            values.append(value)
            history.append((0, model_index, theta, value))
        model_states.append(
            _ModelState(spec, np.asarray(thetas), np.asarray(values, dtype=float))
        )

    state = SelectionState(
        models=models,
        config=config,
        seed=seed,
        budget=budget,
        init_count=init_count_per_model,
        model_states=model_states,
        history=history,
    )
    for ms in state.model_states:
        _rebuild_model(ms, config, seed, refit=True)
    state.last_flags = _refresh_posterior(state, iteration=0)
    return state


def step(state: SelectionState, policy: str) -> tuple[SelectionState, EstimateSnapshot]:
    """One active-learning iteration under the given policy.

    Selects the next (model, location), evaluates that model's
    log-likelihood there, updates the model's surrogate and evidence
    belief, refreshes the posterior-probability belief, and returns an
    estimate snapshot.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    if state.active_steps >= state.budget:
        raise BudgetExhaustedError(
            f"budget of {state.budget} active evaluations is exhausted"
        )
    iteration = state.active_steps + 1
    acq_seed = int(_stream(state.seed, _TAG_ACQ, iteration).generate_state(1)[0])
    cfg = replace(state.config.acq, seed=acq_seed)
    flags: list[str] = []

    if policy == ROUND_ROBIN_US:
        model_index = 1 if state.active_steps % 2 == 0 else 2
        theta = uncertainty_sampling(
            state.model_states[model_index - 1].surrogate,
            state.models[model_index - 1].prior,
            cfg,
        )
    else:
        priors = tuple(m.prior for m in state.models)
        if policy == MI_Z1:
            result = select_next(state.view, state.surrogates, priors, state.z_belief, cfg)
        else:
            result = select_next_model_choice(state.view, state.surrogates, priors, cfg)
        model_index = result.model_index
        theta = result.theta_star
        flags.extend(result.flags)

    spec = state.models[model_index - 1]
    value = float(spec.log_likelihood(theta))
    if not np.isfinite(value):
        raise EvaluationError(
            f"model {spec.name!r}: non-finite log-likelihood at selected location {theta}"
        )

    ms = state.model_states[model_index - 1]
    ms.thetas = np.vstack([ms.thetas, theta[None, :]])
    ms.log_liks = np.append(ms.log_liks, value)
    ms.since_refit += 1
    refit = ms.since_refit >= state.config.refit_every
    _rebuild_model(ms, state.config, state.seed, refit=refit)

    state.history.append((iteration, model_index, np.asarray(theta, dtype=float), value))
    state.active_steps = iteration
    flags.extend(_refresh_posterior(state, iteration))
    state.last_flags = tuple(flags)
    return state, _snapshot(state, iteration, flags)


def run_selection(models, init_count_per_model: int, budget: int, seed: int, policy: str,
                  config: SelectionConfig | None = None):
    """Initialize then step until the active budget is exhausted.

    Returns the final state and the list of snapshots (the initial
    estimate first, then one per active step).
    """
    state = initialize(models, init_count_per_model, seed, budget=budget, config=config)
    snapshots = [_snapshot(state, 0, state.last_flags)]
    while state.active_steps < state.budget:
        state, snap = step(state, policy)
        snapshots.append(snap)
    return state, snapshots


def posterior_probability(m1: float, K1: float, m2: float, K2: float,
                          model_priors: tuple[float, float] = (0.5, 0.5)) -> float:
    """Plug-in posterior probability of model 1 from evidence means.

    Computes p1 m1 / (p1 m1 + p2 m2).  Negative single means are clamped
    to zero; both means nonpositive is an error.  The evidence variances
    are accepted for interface symmetry but do not enter the plug-in
    estimate.
    """
    del K1, K2
    p1, p2 = model_priors
    if p1 < 0 or p2 < 0 or not np.isclose(p1 + p2, 1.0):
        raise ValueError("model priors must be nonnegative and sum to 1")
    if m1 <= 0 and m2 <= 0:
        raise ValueError("at least one evidence mean must be positive")
    a = p1 * max(m1, 0.0)
    b = p2 * max(m2, 0.0)
    return float(a / (a + b))
