"""Estimation of received-signal-strength fields from crowdsourced reports."""

from .model import (
    D_MIN,
    Grid,
    MeasurementSnapshot,
    NoiseModel,
    NumericalError,
    Position,
    PropagationParams,
    clamped_distances,
    distance_matrix,
    log_distance_feature,
    pairwise_distance,
    rho_u_from,
    uniform_grid,
)
from .synth import (
    GroundTruth,
    Intermittent,
    Moving,
    PowerSchedule,
    Scenario,
    Static,
    StepWorld,
    advance_dynamics,
    benchmark_scenario,
    sample_snapshot,
    shadowing_covariance,
)
from .localize import CentroidState, NoFixError, centroid_update, distances_to_estimate, refine_transmitter
from .empbayes import (
    DegenerateFitError,
    HyperEstimate,
    estimate_means,
    estimate_variances,
    refine_all,
)
from .gp import (
    FieldPosterior,
    KernelParams,
    fit_kernel,
    kernel_eval,
    kernel_matrix,
    negative_log_marginal_likelihood,
    noise_cov,
    posterior,
    prior_mean,
)
from .pipeline import PipelineConfig, StaticResult, run_static
from .recursive import RecursiveConfig, RecursiveState, init_state, rgp_step
from .bounds import HcrbReport, hcrb, hcrb_all
from .baseline import VariogramModel, fit_variogram, okd_predict
from .experiments import compute_mse

__version__ = "0.1.0"
