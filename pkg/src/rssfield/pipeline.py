"""End-to-end static fit: localization, hyper-parameters, kernel, posterior.

This is the per-snapshot estimation step shared by the one-shot estimator,
the recursive estimator's initialization and per-step update, and the
command-line runners.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .empbayes import (
    HyperEstimate,
    estimate_means,
    estimate_variances,
    refine_all,
    with_kernel_variances,
)
from .gp import FieldPosterior, KernelParams, fit_kernel, posterior
from .localize import CentroidState
from .model import (
    Grid,
    MeasurementSnapshot,
    NoiseModel,
    Position,
    clamped_distances,
    log_distance_feature,
)


@dataclass
class PipelineConfig:
    """Knobs of the static fit."""

    noise: NoiseModel
    area_bounds: Optional[tuple] = None
    refine_passes: int = 10
    n_starts: int = 4
    maxiter: int = 200
    # measurement covariance for known shadowing parameters (matrix or a
    # callable of the fitted distances); enables the empirical variance path
    sigma_z_given: Optional[object] = None
    # fixed kernel scales; skips the marginal-likelihood fit when given
    kernel: Optional[KernelParams] = None
    # known transmitter location; bypasses localization entirely
    fixed_tx: Optional[Position] = None


@dataclass(frozen=True)
class StaticResult:
    posterior: FieldPosterior
    hyper: HyperEstimate
    kernel: KernelParams
    centroid: CentroidState


def _hyper_with_fixed_tx(snapshot: MeasurementSnapshot, config: PipelineConfig) -> HyperEstimate:
    d_hat = clamped_distances(snapshot.positions, config.fixed_tx)
    q_hat = log_distance_feature(d_hat)
    mu_p, mu_alpha = estimate_means(snapshot.rss, q_hat, d_hat)
    var_p = var_alpha = None
    if config.sigma_z_given is not None:
        given = config.sigma_z_given(d_hat) if callable(config.sigma_z_given) else config.sigma_z_given
        var_p, var_alpha = estimate_variances(snapshot.rss, mu_p, mu_alpha, q_hat, given)
    return HyperEstimate(mu_p=mu_p, mu_alpha=mu_alpha, var_p=var_p, var_alpha=var_alpha, tx=config.fixed_tx)


def run_static(
    snapshot: MeasurementSnapshot,
    grid: Grid,
    config: PipelineConfig,
    centroid: Optional[CentroidState] = None,
    *,
    compute_cov: bool = True,
) -> StaticResult:
    """Fit the field posterior from a single snapshot.

    Hyper-parameters first (weighted centroid, means, refinement loop, and
    variances when the shadowing parameters are known), then kernel scales by
    marginal likelihood unless frozen, then the GP posterior at the grid.
    """
    centroid = centroid if centroid is not None else CentroidState.empty()
    if config.fixed_tx is not None:
        hyper = _hyper_with_fixed_tx(snapshot, config)
    else:
        hyper, centroid = refine_all(
            snapshot,
            centroid,
            area_bounds=config.area_bounds,
            passes=config.refine_passes,
            sigma_z_given=config.sigma_z_given,
        )

    train = (snapshot.positions, snapshot.rss)
    if config.kernel is not None:
        kernel = config.kernel
    else:
        kernel = fit_kernel(
            train, hyper, config.noise, n_starts=config.n_starts, maxiter=config.maxiter
        )
    if hyper.var_p is None:
        hyper = with_kernel_variances(hyper, kernel.sigma_alpha_k, kernel.sigma_p_k)

    post = posterior(
        train, grid, hyper, kernel, config.noise, t=snapshot.t, compute_cov=compute_cov
    )
    return StaticResult(posterior=post, hyper=hyper, kernel=kernel, centroid=centroid)
