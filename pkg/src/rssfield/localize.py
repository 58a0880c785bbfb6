"""Transmitter localization from RSS reports.

A running weighted centroid (weights are the reported powers in linear
units) accumulates every snapshot ever seen; a derivative-free least-squares
refinement sharpens the fix once path-loss estimates are available.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .model import D_MIN, MeasurementSnapshot, Position


class NoFixError(RuntimeError):
    """No measurement has ever contributed weight: the centroid is undefined."""


@dataclass(frozen=True)
class CentroidState:
    """Accumulator of the recursive weighted centroid."""

    weighted_sum: np.ndarray  # (2,) sum of w_i * x_i over all data seen
    total_weight: float  # linear-power units
    estimate: Optional[Position]  # None until any weight has been seen

    def __post_init__(self):
        ws = np.asarray(self.weighted_sum, dtype=float).reshape(2)
        ws.setflags(write=False)
        object.__setattr__(self, "weighted_sum", ws)
        if self.total_weight < 0:
            raise ValueError("total_weight must be >= 0")

    @classmethod
    def empty(cls) -> "CentroidState":
        return cls(weighted_sum=np.zeros(2), total_weight=0.0, estimate=None)

    @property
    def has_fix(self) -> bool:
        return self.estimate is not None

    def with_estimate(self, position: Position) -> "CentroidState":
        """Replace the running estimate (e.g. by a refined fix), keeping the
        accumulated weight so later updates treat it as the carried memory."""
        return CentroidState(
            weighted_sum=position.as_array() * self.total_weight,
            total_weight=self.total_weight,
            estimate=position,
        )


def centroid_update(state: CentroidState, snapshot: MeasurementSnapshot) -> CentroidState:
    """Fold one snapshot into the running weighted centroid.

    Weights are w_i = 10^(z_i / 10); the previous estimate enters with the
    accumulated weight, so the recursion keeps all past information.
    """
    if snapshot.n_sensors == 0:
        return state
    w = np.power(10.0, snapshot.rss / 10.0)
    weighted_sum = state.weighted_sum + w @ snapshot.positions
    total = state.total_weight + float(np.sum(w))
    if total <= 0.0:
        return CentroidState(weighted_sum=weighted_sum, total_weight=total, estimate=None)
    est = weighted_sum / total
    return CentroidState(
        weighted_sum=weighted_sum,
        total_weight=total,
        estimate=Position(float(est[0]), float(est[1])),
    )


def distances_to_estimate(state: CentroidState, positions) -> np.ndarray:
    """Distances from each position to the current fix, clamped at D_MIN."""
    if not state.has_fix:
        raise NoFixError("centroid has no fix; no measurements seen yet")
    pts = np.asarray(positions, dtype=float).reshape(-1, 2)
    d = np.hypot(pts[:, 0] - state.estimate.x, pts[:, 1] - state.estimate.y)
    return np.maximum(d, D_MIN)


def _objective(x0: np.ndarray, xy: np.ndarray, z: np.ndarray, mu_p: float, mu_alpha: float) -> float:
    d = np.maximum(np.hypot(xy[:, 0] - x0[0], xy[:, 1] - x0[1]), D_MIN)
    r = z - mu_p + 10.0 * mu_alpha * np.log10(d)
    return float(r @ r)


def refine_transmitter(
    snapshot: MeasurementSnapshot,
    positions,
    mu_p: float,
    mu_alpha: float,
    init: Position,
    area_bounds=None,
    maxiter: int = 200,
) -> tuple:
    """Local least-squares re-estimate of the transmitter position.

    Minimizes sum_i (z_i - mu_p + 10 mu_alpha log10 ||x_i - x0||)^2 by
    Nelder-Mead started at ``init``. Returns (position, degenerate): with
    fewer than 3 sensors the problem is not identifiable and ``init`` is
    returned with the degenerate flag set. The result never has a larger
    objective than ``init`` and is clamped to ``area_bounds`` when given.
    """
    xy = np.asarray(positions, dtype=float).reshape(-1, 2)
    z = snapshot.rss
    if xy.shape[0] != z.shape[0]:
        raise ValueError("positions length must match snapshot")
    if xy.shape[0] < 3:
        return init, True

    x_init = init.as_array()
    f_init = _objective(x_init, xy, z, mu_p, mu_alpha)
    res = minimize(
        _objective,
        x_init,
        args=(xy, z, mu_p, mu_alpha),
        method="Nelder-Mead",
        options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-14},
    )
    cand = res.x
    if area_bounds is not None:
        (xlo, xhi), (ylo, yhi) = area_bounds
        cand = np.array([np.clip(cand[0], xlo, xhi), np.clip(cand[1], ylo, yhi)])
    if _objective(cand, xy, z, mu_p, mu_alpha) > f_init:
        return init, False
    return Position(float(cand[0]), float(cand[1])), False
