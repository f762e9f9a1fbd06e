"""Forward rollout of the tracked ball to the interception plane.

The mean runs through the same integrator as the flight dynamics, so a
rollout of a known state lands exactly where simulate_flight says it will;
the covariance rides along under the tracker's linearization. A prediction
is a value: when the ball never reaches the plane inside the horizon it
comes back flagged invalid rather than raising.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .dynamics import param_vector
from .tracker import TrackMode, TrackerConfig, TrackerState
from .world import PHYSICS_DT, WorldConfig

RACKET_HEAD_WIDTH = 0.20


@dataclass(frozen=True, eq=False)
class InterceptPrediction:
    plane_x: float
    point: np.ndarray
    t_cross: float
    pos_cov: np.ndarray
    valid: bool

    @staticmethod
    def none(plane_x: float) -> "InterceptPrediction":
        return InterceptPrediction(
            plane_x=plane_x, point=np.full(3, math.nan), t_cross=math.nan,
            pos_cov=np.full((3, 3), math.nan), valid=False)


@dataclass(frozen=True)
class ObservedCrossing:
    """Ground-truth plane crossing measured after the flight."""

    point: np.ndarray
    t_cross: float
    v: np.ndarray


@dataclass(frozen=True)
class PredictorConfig:
    horizon: float = 3.0
    dt: float = PHYSICS_DT
    act_threshold: float = RACKET_HEAD_WIDTH


class Predictor:
    """Rolls TrackerStates to a fixed x-plane under the tracker's noise
    model, so predicted covariance stays consistent with the filter."""

    def __init__(self, world: WorldConfig,
                 tracker_config: Optional[TrackerConfig] = None,
                 config: Optional[PredictorConfig] = None):
        self.world = world
        self.tracker_config = tracker_config or TrackerConfig()
        self.config = config or PredictorConfig()
        self._params = param_vector(world)

    def rollout(self, ts: TrackerState, plane_x: float,
                horizon: Optional[float] = None) -> InterceptPrediction:
        if ts.mode is not TrackMode.TRACKING:
            raise ValueError("rollout requires an initialized track")
        x, vx = float(ts.mean[0]), float(ts.mean[3])
        if x == plane_x:
            if vx == 0.0:
                return InterceptPrediction.none(plane_x)
            return InterceptPrediction(
                plane_x=plane_x, point=ts.mean[:3].copy(), t_cross=ts.t,
                pos_cov=ts.cov[:3, :3].copy(), valid=True)
        direction = -1.0 if x > plane_x else 1.0
        found, t_cross, state, cov, _ = kernels.rollout_plane(
            ts.mean, ts.cov, ts.t, plane_x, direction,
            self.config.horizon if horizon is None else horizon,
            self.config.dt, self._params,
            self.tracker_config.process_noise,
            self.tracker_config.bounce_noise)
        if not found:
            return InterceptPrediction.none(plane_x)
        return InterceptPrediction(
            plane_x=plane_x, point=state[:3].copy(), t_cross=float(t_cross),
            pos_cov=cov[:3, :3].copy(), valid=True)


def should_act(pred: InterceptPrediction,
               threshold: float = RACKET_HEAD_WIDTH) -> bool:
    """Commit gate: act only when the 1-sigma radius of the predicted
    interception point is inside the threshold (racket head width)."""
    if not pred.valid:
        return False
    radius = math.sqrt(float(np.linalg.eigvalsh(pred.pos_cov)[-1]))
    return radius <= threshold


def convergence_series(predictions: Sequence[tuple[float, InterceptPrediction]],
                       observed: ObservedCrossing,
                       t_first_detection: float) -> np.ndarray:
    """Per-flight forecast error versus flight fraction.

    Rows are (fraction_of_flight, |err_x|, |err_y|, |err_z|) for each valid
    prediction, where fraction is the issue time normalized to the span from
    first detection to the observed crossing. y and z errors are deviations
    of the predicted interception point; both x coordinates sit on the plane
    by construction, so the x column reports the timing miss scaled by the
    observed crossing speed (how far along-track the ball is when the racket
    expects it).
    """
    flight = observed.t_cross - t_first_detection
    if flight <= 0:
        raise ValueError("observed crossing precedes first detection")
    rows = []
    for t_issue, pred in predictions:
        if not pred.valid:
            continue
        frac = (t_issue - t_first_detection) / flight
        err_x = abs(observed.v[0]) * abs(pred.t_cross - observed.t_cross)
        err_y = abs(pred.point[1] - observed.point[1])
        err_z = abs(pred.point[2] - observed.point[2])
        rows.append((frac, err_x, err_y, err_z))
    return np.array(rows).reshape(-1, 4)


def write_convergence_csv(path, series: np.ndarray) -> None:
    np.savetxt(path, series, fmt="%.10g", delimiter=",",
               header="fraction,err_x,err_y,err_z", comments="")
