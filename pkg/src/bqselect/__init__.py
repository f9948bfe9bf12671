"""Active Bayesian-quadrature model comparison.

GP surrogates over log-likelihoods induce Gaussian beliefs over model
evidences; evaluation locations are chosen across both candidate models'
parameter spaces by maximizing mutual information with the posterior
model probability.  Monte Carlo baselines (prior sampling, bridge
sampling, a reversible-jump chain) and a synthetic benchmark harness are
included.
"""

from .acquisition import (
    AcquisitionConfig,
    AcquisitionResult,
    PosteriorProbabilityBelief,
    binary_entropy,
    mi_model_choice,
    mi_z1,
    sample_z1,
    select_next,
    select_next_model_choice,
    uncertainty_sampling,
)
from .baselines import (
    BridgeResult,
    ChainConfig,
    RjmcmcDiagnostics,
    bridge_sampling,
    posterior_mcmc,
    rjmcmc,
    smc_evidence,
)
from .evidence import (
    EvidenceBelief,
    JointEvidenceView,
    QuadratureConfig,
    conditional_likelihood_entropy,
    evidence_belief,
    joint_view,
    pivot_moments,
)
from .gp import (
    FitConfig,
    FitResult,
    GaussianProcessPosterior,
    fit_hyperparameters,
    gp_condition,
    log_marginal_likelihood,
)
from .kernels import Kernel, cross_gram, gram
from .priors import DiagonalGaussianPrior, UniformBoxPrior
from .selection import (
    MI_MODEL_CHOICE,
    MI_Z1,
    POLICIES,
    ROUND_ROBIN_US,
    EstimateSnapshot,
    ModelSpec,
    SelectionConfig,
    SelectionState,
    initialize,
    posterior_probability,
    run_selection,
    step,
)
from .tasks import GPMarginalLikelihood, SyntheticTask, TaskConfig, generate_task, load_task, save_task
from .trials import ALL_METHODS, BRIDGE, RJMCMC_METHOD, MetricTrace, RunConfig, TraceRow, run_trial
from .warp import LinearSurrogate, WarpedSurrogate, warp_moment_match

__version__ = "0.1.0"
