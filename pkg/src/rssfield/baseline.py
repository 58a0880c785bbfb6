"""Ordinary kriging of detrended residuals, the interpolation baseline.

Reports are detrended by the estimated log-distance mean, the residual
spatial structure is summarized by an empirical semivariogram fitted with an
exponential model, and the residuals are kriged onto the grid under the
usual weights-sum-to-one constraint before the trend is added back.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .empbayes import HyperEstimate
from .gp import prior_mean
from .model import Grid, distance_matrix

_DUP_EPS = 1e-9


@dataclass(frozen=True)
class VariogramModel:
    """Exponential semivariogram gamma(h) = nugget + sill * (1 - exp(-h/range))."""

    nugget: float  # dB^2
    sill: float  # dB^2
    range_m: float  # meters

    def __post_init__(self):
        if self.nugget < 0 or self.sill < 0:
            raise ValueError("nugget and sill must be >= 0")
        if self.range_m <= 0:
            raise ValueError("range must be > 0")

    def covariance(self, h: np.ndarray) -> np.ndarray:
        """Covariance C(h) = sill * exp(-h/range), plus the nugget at h = 0."""
        h = np.asarray(h, dtype=float)
        return self.sill * np.exp(-h / self.range_m) + self.nugget * (h < _DUP_EPS)


def _empirical_semivariogram(residuals, positions, n_bins):
    d = distance_matrix(positions, positions)
    iu = np.triu_indices_from(d, k=1)
    dists = d[iu]
    gammas = 0.5 * (residuals[iu[0]] - residuals[iu[1]]) ** 2

    dup = dists < _DUP_EPS
    nugget_point = (0.0, float(np.mean(gammas[dup])), int(np.sum(dup))) if np.any(dup) else None

    half_max = float(np.max(dists)) / 2.0
    if half_max <= 0:
        raise ValueError("all positions coincide; no variogram is defined")
    in_range = (~dup) & (dists <= half_max)
    edges = np.linspace(0.0, half_max, n_bins + 1)
    idx = np.clip(np.searchsorted(edges, dists[in_range], side="right") - 1, 0, n_bins - 1)

    hs, gs, counts = [], [], []
    for b in range(n_bins):
        mask = idx == b
        cnt = int(np.sum(mask))
        if cnt == 0:
            continue
        hs.append(0.5 * (edges[b] + edges[b + 1]))
        gs.append(float(np.mean(gammas[in_range][mask])))
        counts.append(cnt)
    if nugget_point is not None:
        hs.insert(0, nugget_point[0])
        gs.insert(0, nugget_point[1])
        counts.insert(0, nugget_point[2])
    return np.array(hs), np.array(gs), np.array(counts, dtype=float), half_max


def fit_variogram(residuals, positions, n_bins: int = 15) -> VariogramModel:
    """Least-squares exponential fit of the binned empirical semivariogram.

    Bins are widened (fewer of them) when too sparsely populated; fewer than
    three populated bins is an error. Requires at least 10 points.
    """
    residuals = np.asarray(residuals, dtype=float).reshape(-1)
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    if residuals.shape[0] != positions.shape[0]:
        raise ValueError("residuals and positions lengths disagree")
    if residuals.shape[0] < 10:
        raise ValueError("need at least 10 points to fit a variogram")

    hs = gs = counts = None
    half_max = None
    for bins in (n_bins, max(n_bins // 2, 4), 4):
        hs, gs, counts, half_max = _empirical_semivariogram(residuals, positions, bins)
        if hs.shape[0] >= 3:
            break
    if hs.shape[0] < 3:
        raise ValueError("too few populated distance bins to fit a variogram")

    s0 = max(float(np.var(residuals)), 1e-12)
    r0 = max(half_max / 3.0, 1e-3)
    w = np.sqrt(counts)

    def model_residuals(p):
        nugget, sill, rng = p
        return w * (nugget + sill * (1.0 - np.exp(-hs / rng)) - gs)

    fit = least_squares(
        model_residuals,
        x0=[0.0, s0, r0],
        bounds=([0.0, 0.0, 1e-6], [np.inf, np.inf, np.inf]),
    )
    nugget, sill, rng = fit.x
    return VariogramModel(nugget=float(nugget), sill=float(sill), range_m=float(rng))


def okd_predict(
    train,
    grid: Grid,
    hyper: HyperEstimate,
    variogram: VariogramModel = None,
    *,
    return_variance: bool = False,
):
    """Ordinary-kriging field estimate at the grid nodes, dBm.

    Detrends by the estimated path-loss mean, kriges the residuals with the
    bordered (unbiasedness-constrained) system shared across all nodes, and
    re-adds the trend. A singular system falls back to the pseudo-inverse
    with a warning.
    """
    xy, z = train
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    z = np.asarray(z, dtype=float).reshape(-1)
    n = xy.shape[0]
    if n == 0:
        raise ValueError("ordinary kriging needs at least one training point")

    trend_train = prior_mean(xy, hyper)
    resid = z - trend_train
    if variogram is None:
        variogram = fit_variogram(resid, xy)

    cov_train = variogram.covariance(distance_matrix(xy, xy))
    bordered = np.zeros((n + 1, n + 1))
    bordered[:n, :n] = cov_train
    bordered[:n, n] = 1.0
    bordered[n, :n] = 1.0

    cov_to_nodes = variogram.covariance(distance_matrix(xy, grid.xy))  # (N, M)
    rhs = np.vstack([cov_to_nodes, np.ones((1, grid.n_nodes))])

    try:
        sol = np.linalg.solve(bordered, rhs)
    except np.linalg.LinAlgError:
        warnings.warn("singular kriging system; using pseudo-inverse", RuntimeWarning, stacklevel=2)
        sol = np.linalg.pinv(bordered) @ rhs

    weights = sol[:n, :]  # (N, M)
    nu = sol[n, :]  # (M,) Lagrange multipliers
    pred = weights.T @ resid + prior_mean(grid.xy, hyper)
    if not return_variance:
        return pred
    c0 = variogram.sill + variogram.nugget
    var = c0 - np.sum(weights * cov_to_nodes, axis=0) - nu
    return pred, np.maximum(var, 0.0)
