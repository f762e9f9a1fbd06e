"""Continuous-discrete EKF over ball flight, fed by the merged rig stream.

The filter state is a value; BallTracker holds the tuning and the world
model and exposes pure transitions. Delayed arrivals are handled by
rewinding to a checkpoint at or before the late capture time and replaying
the buffered measurements, so the posterior matches what in-order
processing would have produced.
"""
from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import kernels
from .dynamics import param_vector
from .vision import Measurement
from .world import WorldConfig


class TrackMode(enum.Enum):
    IDLE = "idle"
    TRACKING = "tracking"


@dataclass(frozen=True)
class InitPrior:
    """Velocity belief applied at reset; position comes from the triggering
    measurement. Default: 8 m/s toward the robot end, wide open."""

    v_mean: np.ndarray = field(
        default_factory=lambda: np.array([-8.0, 0.0, 0.0]))
    v_var: float = 25.0


@dataclass(frozen=True)
class TrackerConfig:
    lag_horizon: float = 0.3
    new_ball_gap: float = 1.0
    process_noise: float = 0.5   # white-accel spectral density, m^2/s^3
    bounce_noise: float = 0.5    # extra velocity stddev applied at a bounce
    dt_sub: float = 0.005        # covariance propagation substep
    prior: InitPrior = field(default_factory=InitPrior)


@dataclass(frozen=True)
class _Checkpoint:
    """Posterior snapshot right after one accepted measurement."""

    t: float
    mean: np.ndarray
    cov: np.ndarray
    n_bounces: int


@dataclass(frozen=True)
class TrackerState:
    mode: TrackMode
    t: float
    mean: np.ndarray                       # (p, v)
    cov: np.ndarray                        # 6x6
    n_bounces: int                         # predicted bounces since reset
    replay_buffer: tuple                   # Measurements in capture order
    checkpoints: tuple                     # one _Checkpoint per buffer entry
    anchor: Optional[_Checkpoint]          # checkpoint preceding the buffer
    n_stale: int
    n_rejected: int
    lag_horizon: float
    process_noise_rates: np.ndarray

    @property
    def position(self) -> np.ndarray:
        return self.mean[:3]

    @property
    def velocity(self) -> np.ndarray:
        return self.mean[3:]


def _order_key(m: Measurement):
    return (m.t_capture, m.t_arrival, m.rig_id)


def _validated(ts: TrackerState) -> TrackerState:
    asym = float(np.max(np.abs(ts.cov - ts.cov.T)))
    assert asym <= 1e-12, f"covariance asymmetry {asym}"
    min_eig = float(np.linalg.eigvalsh(ts.cov)[0])
    assert min_eig >= -1e-10, f"covariance not PSD, min eig {min_eig}"
    return ts


def confidence(ts: TrackerState) -> float:
    """1-sigma position uncertainty radius: sqrt of the largest eigenvalue
    of the position covariance block."""
    if ts.mode is not TrackMode.TRACKING:
        raise ValueError("confidence undefined while idle")
    return math.sqrt(float(np.linalg.eigvalsh(ts.cov[:3, :3])[-1]))


class BallTracker:
    """EKF engine: owns world parameters and tuning, transitions are pure."""

    def __init__(self, world: WorldConfig,
                 config: Optional[TrackerConfig] = None):
        self.world = world
        self.config = config or TrackerConfig()
        self._params = param_vector(world)

    def idle(self) -> TrackerState:
        return TrackerState(
            mode=TrackMode.IDLE, t=-math.inf,
            mean=np.zeros(6), cov=np.eye(6), n_bounces=0,
            replay_buffer=(), checkpoints=(), anchor=None,
            n_stale=0, n_rejected=0,
            lag_horizon=self.config.lag_horizon,
            process_noise_rates=np.full(3, self.config.process_noise),
        )

    def reset(self, m: Measurement,
              prev: Optional[TrackerState] = None) -> TrackerState:
        """First-detection (or new-ball) initialization from one fix."""
        prior = self.config.prior
        mean = np.concatenate([m.z, prior.v_mean]).astype(float)
        cov = np.zeros((6, 6))
        cov[:3, :3] = m.sigma ** 2 * np.eye(3)
        cov[3:, 3:] = prior.v_var * np.eye(3)
        ts = TrackerState(
            mode=TrackMode.TRACKING, t=m.t_capture, mean=mean, cov=cov,
            n_bounces=0, replay_buffer=(m,),
            checkpoints=(_Checkpoint(m.t_capture, mean, cov, 0),),
            anchor=None,
            n_stale=prev.n_stale if prev else 0,
            n_rejected=prev.n_rejected if prev else 0,
            lag_horizon=self.config.lag_horizon,
            process_noise_rates=np.full(3, self.config.process_noise),
        )
        return _validated(ts)

    def predict_to(self, ts: TrackerState, t_target: float) -> TrackerState:
        if t_target < ts.t:
            raise ValueError(f"cannot predict backwards: {t_target} < {ts.t}")
        if t_target == ts.t:
            return ts
        mean, cov, nb = kernels.ekf_predict(
            ts.mean, ts.cov, ts.t, t_target, self.config.dt_sub,
            self._params, self.config.process_noise,
            self.config.bounce_noise)
        return _validated(replace(
            ts, t=t_target, mean=mean, cov=cov,
            n_bounces=ts.n_bounces + int(nb)))

    def update(self, ts: TrackerState, m: Measurement) -> TrackerState:
        if ts.mode is not TrackMode.TRACKING:
            raise ValueError("update requires an initialized track")
        if abs(ts.t - m.t_capture) > 1e-9:
            raise ValueError("predict to the capture time before updating")
        if not np.all(np.isfinite(m.z - ts.mean[:3])):
            return replace(ts, n_rejected=ts.n_rejected + 1)
        mean, cov = kernels.ekf_update(ts.mean, ts.cov, m.z, m.sigma)
        buf, chks = self._appended(ts, m,
                                   _Checkpoint(ts.t, mean, cov, ts.n_bounces))
        return _validated(replace(
            ts, mean=mean, cov=cov, replay_buffer=buf, checkpoints=chks))

    def ingest(self, ts: TrackerState, m: Measurement,
               now: float) -> TrackerState:
        """Fold one arrival into the track, rewinding when it captured in
        the past. Stale captures (older than lag_horizon) are dropped."""
        if m.t_arrival > now + 1e-9:
            raise ValueError("measurement from the future")
        if ts.mode is TrackMode.IDLE:
            return self.reset(m, prev=ts)
        last_cap = ts.replay_buffer[-1].t_capture if ts.replay_buffer else ts.t
        if m.t_capture - last_cap >= self.config.new_ball_gap:
            return self.reset(m, prev=ts)
        if m.t_capture < ts.t - self.config.lag_horizon:
            return replace(ts, n_stale=ts.n_stale + 1)
        if m.t_capture >= ts.t:
            out = self.update(self.predict_to(ts, m.t_capture), m)
        else:
            out = self._rewind_replay(ts, m)
        return self._pruned(out)

    # -- internals -----------------------------------------------------------

    def _appended(self, ts, m, chk):
        return ts.replay_buffer + (m,), ts.checkpoints + (chk,)

    def _rewind_replay(self, ts: TrackerState, m: Measurement) -> TrackerState:
        keys = [_order_key(b) for b in ts.replay_buffer]
        pos = bisect.bisect_right(keys, _order_key(m))
        tail = ts.replay_buffer[pos:]
        if pos == 0:
            if ts.anchor is None:
                # arrived late but captured before the track began: it is the
                # real first detection, so start over and absorb the rest
                base = self.reset(m, prev=ts)
                replay = tail
            else:
                base = self._from_checkpoint(ts, ts.anchor,
                                             ts.replay_buffer[:0],
                                             ts.checkpoints[:0])
                replay = (m,) + tail
        else:
            base = self._from_checkpoint(ts, ts.checkpoints[pos - 1],
                                         ts.replay_buffer[:pos],
                                         ts.checkpoints[:pos])
            replay = (m,) + tail
        out = base
        for meas in replay:
            out = self.update(self.predict_to(out, meas.t_capture), meas)
        if ts.t > out.t:
            out = self.predict_to(out, ts.t)
        return out

    def _from_checkpoint(self, ts, chk, buf, chks) -> TrackerState:
        return replace(ts, t=chk.t, mean=chk.mean, cov=chk.cov,
                       n_bounces=chk.n_bounces,
                       replay_buffer=buf, checkpoints=chks)

    def _pruned(self, ts: TrackerState) -> TrackerState:
        cutoff = ts.t - self.config.lag_horizon
        i = 0
        while (i < len(ts.replay_buffer)
               and ts.replay_buffer[i].t_capture < cutoff):
            i += 1
        if i == 0:
            return ts
        # remember the newest pruned posterior as the rewind floor
        return replace(ts, replay_buffer=ts.replay_buffer[i:],
                       checkpoints=ts.checkpoints[i:],
                       anchor=ts.checkpoints[i - 1])
