"""Lower bound on the per-node mean squared error of the field estimate.

The GP posterior variance alone is a bound when the prior-mean parameters are
known. Estimating them (power level, path-loss exponent and the transmitter
fix) adds g^T M^-1 g, a quadratic form in the derivative of the predictive
mean with respect to those four parameters, where M is their information
matrix under the training covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from .empbayes import HyperEstimate
from .gp import KernelParams, chol_with_jitter, kernel_matrix, prior_mean
from .model import (
    Grid,
    LOG10_E,
    NoiseModel,
    clamped_distances,
    log_distance_feature,
)

_SINGULAR_RCOND = 1e-10


@dataclass(frozen=True)
class HcrbReport:
    """Error bound at one grid node, split into its two parts (dB^2)."""

    node_index: int
    gp_variance: float
    added_term: float
    bound: float
    singular: bool = False


def grid_mean_gradient(node_xy, tx, mu_alpha: float) -> np.ndarray:
    """Derivative of the node prior mean w.r.t. (mu_p, mu_alpha, tx_x, tx_y)."""
    node = np.asarray(node_xy, dtype=float).reshape(2)
    d = float(clamped_distances(node[None, :], tx)[0])
    c = -10.0 * mu_alpha * LOG10_E
    return np.array(
        [
            1.0,
            -log_distance_feature(d),
            c * (tx.x - node[0]) / d**2,
            c * (tx.y - node[1]) / d**2,
        ]
    )


def _unpack_train(train):
    if len(train) == 3:
        xy, z, d_hat = train
    else:
        xy, z = train
        d_hat = None
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    z = np.asarray(z, dtype=float).reshape(-1)
    return xy, z, d_hat


def _reports(train, grid, hyper, kernel, noise, node_indices) -> list:
    xy, z, d_hat = _unpack_train(train)
    if d_hat is None:
        d_hat = clamped_distances(xy, hyper.tx)
    d_hat = np.asarray(d_hat, dtype=float).reshape(-1)
    n = xy.shape[0]
    tx = hyper.tx

    q_hat = log_distance_feature(d_hat)
    c_mat = kernel_matrix(xy, xy, kernel, tx)
    c_mat[np.diag_indices_from(c_mat)] += noise.variances(d_hat)
    low, _ = chol_with_jitter(c_mat, "training covariance")

    # Jacobian of the training prior mean w.r.t. (mu_p, mu_alpha, tx)
    c_const = -10.0 * hyper.mu_alpha * LOG10_E
    a_mat = c_const * (np.array([tx.x, tx.y])[None, :] - xy) / d_hat[:, None] ** 2
    jac = np.column_stack([np.ones(n), -q_hat, a_mat])  # (N, 4)

    cinv_jac = cho_solve((low, True), jac)
    info = jac.T @ cinv_jac  # (4, 4)
    eig = np.linalg.eigvalsh(info)
    singular = bool(eig[0] <= _SINGULAR_RCOND * max(eig[-1], 0.0) or eig[0] <= 0.0)
    if singular:
        info_inv = np.linalg.pinv(info, rcond=_SINGULAR_RCOND, hermitian=True)
    else:
        info_inv = np.linalg.inv(info)

    # derivative of the training covariance w.r.t. the fix, through 1/d^2
    rho_sq = noise.rho_u**2
    a1_diag = -2.0 * rho_sq * (tx.x - xy[:, 0]) / d_hat**4
    a2_diag = -2.0 * rho_sq * (tx.y - xy[:, 1]) / d_hat**4

    m_train = prior_mean(xy, hyper)
    u = cho_solve((low, True), m_train)

    nodes_xy = grid.xy[node_indices]
    k_xg = kernel_matrix(xy, nodes_xy, kernel, tx)  # (N, m)
    cinv_k = cho_solve((low, True), k_xg)  # (N, m)

    kdiag = kernel.sigma_k**2 + kernel.sigma_alpha_k**2 * log_distance_feature(
        clamped_distances(nodes_xy, tx)
    ) ** 2 + kernel.sigma_p_k**2
    gp_var = kdiag - np.sum(k_xg * cinv_k, axis=0)

    term2 = cinv_jac.T @ k_xg  # (4, m)
    term3_x = (u * a1_diag) @ cinv_k  # (m,)
    term3_y = (u * a2_diag) @ cinv_k

    reports = []
    for j, i in enumerate(node_indices):
        g = grid_mean_gradient(nodes_xy[j], tx, hyper.mu_alpha) - term2[:, j]
        g[2] += term3_x[j]
        g[3] += term3_y[j]
        added = max(float(g @ info_inv @ g), 0.0)
        var_i = max(float(gp_var[j]), 0.0)
        reports.append(
            HcrbReport(
                node_index=int(i),
                gp_variance=var_i,
                added_term=added,
                bound=var_i + added,
                singular=singular,
            )
        )
    return reports


def hcrb_all(
    train,
    grid: Grid,
    hyper: HyperEstimate,
    kernel: KernelParams,
    noise: NoiseModel,
) -> list:
    """HcrbReport for every grid node, sharing one training factorization."""
    return _reports(train, grid, hyper, kernel, noise, list(range(grid.n_nodes)))


def hcrb(
    node: int,
    train,
    grid: Grid,
    hyper: HyperEstimate,
    kernel: KernelParams,
    noise: NoiseModel,
) -> HcrbReport:
    """Bound at a single grid node."""
    if not 0 <= node < grid.n_nodes:
        raise ValueError(f"node index {node} out of range")
    return _reports(train, grid, hyper, kernel, noise, [node])[0]
