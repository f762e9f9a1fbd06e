"""One complete trial against the launcher.

The incoming flight is integrated once up front (the ball is untouched by
the robot until racket contact), six detection rigs sample it with their
own noise, dropout, and latency streams, and the robot side runs at the
physics tick: arrivals fold into the lag-compensated filter, the planner
refreshes its interception rollout every 10 ms, the wheelchair repositions
as soon as the prediction is worth chasing, the stroke commits when the
prediction tightens past the act threshold, and the swing either meets the
ball or does not. Contact hands the outgoing ball back to the integrator,
and the return is judged against the court.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import BounceLimit, PlaneCrossing, TimeHorizon, simulate_flight
from .predictor import (InterceptPrediction, ObservedCrossing, Predictor,
                        convergence_series, should_act)
from .scenario import Scenario, launch
from .stroke import (Gate, InfeasibleStrokeError, NoContactError,
                     StrokePlanner, arm_fk, racket_impact, replan_gate)
from .tracker import BallTracker, TrackMode
from .vision import merge_streams, observe
from .wheelchair import BaseCommand, plan_move, step_base
from .world import (PHYSICS_DT, BallState, CourtMode, WheelchairState,
                    in_singles_bounds)

PLANNER_DT = 0.010
HIT_RADIUS = 0.10
# chase a provisional target once the predicted point is this certain
PROVISIONAL_SIGMA = 1.2
# low-pass gain on the chased target; raw tick-to-tick prediction jitter
# must not turn into a replan storm that keeps the chair braking
TARGET_SMOOTHING = 0.25
# post-lock follow: cap on the station shift away from the locked plan
FOLLOW_CLIP = 0.3
RETARGET_EPS_MOVING = 0.02
RETARGET_EPS_REST = 0.005
FLIGHT_HORIZON = 4.0


class Outcome(enum.Enum):
    MISS = "miss"            # the racket never met the ball
    OUT = "out"              # met it, but the return failed
    RETURNED = "returned"    # return cleared and landed in


@dataclass(frozen=True)
class EpisodeResult:
    index: int
    outcome: Outcome
    launch_speed: float
    observed: Optional[ObservedCrossing]
    t_first_detection: float
    time_to_intercept: float
    intercept_point: Optional[np.ndarray]
    t_contact: float
    committed: bool
    trigger_time: float
    chair_travel: float
    max_accel: float
    max_decel: float
    n_measurements: int
    n_predictions: int
    convergence: np.ndarray
    trace: Optional[np.ndarray] = None

    @property
    def hit(self) -> bool:
        return self.outcome is not Outcome.MISS

    @property
    def success(self) -> bool:
        return self.outcome is Outcome.RETURNED


def _standoff_y(arm, z: float) -> float:
    """Lateral standoff of the chair from a contact at height z. The
    height is clamped into the arm's band so a rough early prediction
    still yields a usable provisional target."""
    base_z = float(arm.base_offset[2])
    s = (z - base_z) / arm.reach
    s = min(max(s, -0.95), 0.95)
    return arm.reach * math.sqrt(1.0 - s * s)


def _rig_stream(samples: np.ndarray, rig, seed) -> list:
    """Measurements one rig produces over a precomputed flight. Frame
    phases stagger by 5 ms per rig so the pooled stream updates at six
    times the single-rig rate."""
    rng = np.random.default_rng(seed)
    period = 1.0 / rig.rate
    phase = rig.rig_id * 0.005
    t_end = samples[-1, 0]
    out = []
    k = 0
    while True:
        tc = phase + k * period
        if tc > t_end + 1e-9:
            break
        idx = int(round(tc / PHYSICS_DT))
        if idx >= len(samples):
            break
        row = samples[idx]
        truth = BallState.make(row[1:4], row[4:7], t=row[0],
                               bounce_count=int(row[7]))
        m = observe(rig, truth, rng)
        if m is not None:
            out.append(m)
        k += 1
    return out


def generate_streams(trajectory, rigs, seeds, scheduler: str = "serial"):
    """Per-rig streams merged into one arrival-ordered list. Each rig owns
    its generator, so running the rigs on a thread pool reproduces the
    serial result bit for bit."""
    if scheduler not in ("serial", "threads"):
        raise ValueError(f"unknown scheduler {scheduler!r}")
    samples = trajectory.samples
    if scheduler == "threads":
        with ThreadPoolExecutor(max_workers=len(rigs)) as pool:
            futures = [pool.submit(_rig_stream, samples, rig, seed)
                       for rig, seed in zip(rigs, seeds)]
            streams = [f.result() for f in futures]
    else:
        streams = [_rig_stream(samples, rig, seed)
                   for rig, seed in zip(rigs, seeds)]
    return merge_streams(streams)


def classify_return(post: BallState, s: Scenario) -> Outcome:
    """Judge the outgoing ball. On the court it must clear the net without
    bouncing first and land inside the far singles, in the lab it must
    cross the launch plane above net height on the fly."""
    if s.court.mode is CourtMode.COURT:
        plane = s.court.net_x
    else:
        plane = float(s.launcher.origin[0])
    res = simulate_flight(post, s.world, PlaneCrossing(plane, +1.0,
                                                       horizon=3.0))
    if res.crossing is None:
        return Outcome.OUT
    if any(ev.t < res.crossing.t for ev in res.trajectory.events):
        return Outcome.OUT
    if res.crossing.p[2] <= s.court.net_height:
        return Outcome.OUT
    if s.court.mode is CourtMode.LAB:
        return Outcome.RETURNED
    land = simulate_flight(res.crossing, s.world,
                           BounceLimit(max_bounces=1, horizon=3.0))
    if not land.trajectory.events:
        return Outcome.OUT
    b = land.trajectory.events[0].position
    if b[0] > s.court.net_x and in_singles_bounds(b, s.court):
        return Outcome.RETURNED
    return Outcome.OUT


def run_episode(s: Scenario, index: int, record_trace: bool = False,
                scheduler: str = "serial") -> EpisodeResult:
    s.validate()
    ss = np.random.SeedSequence((s.seed, index))
    children = ss.spawn(1 + len(s.rigs))
    ball0 = launch(s.launcher, np.random.default_rng(children[0]))
    launch_speed = float(np.linalg.norm(ball0.v))

    full = simulate_flight(ball0, s.world, TimeHorizon(FLIGHT_HORIZON))
    cross = simulate_flight(ball0, s.world,
                            PlaneCrossing(s.plane_x, -1.0,
                                          horizon=FLIGHT_HORIZON))
    observed = None
    if cross.crossing is not None:
        cs = cross.crossing
        observed = ObservedCrossing(point=cs.p.copy(), t_cross=float(cs.t),
                                    v=cs.v.copy())

    arrivals = generate_streams(full.trajectory, s.rigs, children[1:],
                                scheduler)
    samples = full.trajectory.samples

    tracker = BallTracker(s.world, s.tracker)
    ts = tracker.idle()
    predictor = Predictor(s.world, s.tracker)
    planner = StrokePlanner(model=s.arm, court=s.court)
    chair = WheelchairState(x=s.robot_home[0], y=s.robot_home[1],
                            heading=s.robot_home[2])

    traj = None
    traj_t0 = 0.0
    plan = None
    committed = False
    locked = False
    locked_radius = math.inf
    plan_radius = math.inf
    predictions: list = []
    t_first = math.nan
    n_meas = 0
    travel = 0.0
    max_acc = 0.0
    max_dec = 0.0
    prev_speed = 0.0
    contact_point = None
    t_contact = math.nan
    outcome = Outcome.MISS
    trace_rows: list = [] if record_trace else None
    ptr = 0
    dt = PHYSICS_DT

    smooth_y = None

    def retarget(desired_y, now):
        # the chase is one dimensional: every chair target sits on the
        # interception plane facing -y, only the lateral station moves
        nonlocal traj, traj_t0, smooth_y
        smooth_y = desired_y if smooth_y is None else (
            smooth_y + TARGET_SMOOTHING * (desired_y - smooth_y))
        if traj is not None:
            moving = abs(chair.v_lin) > 1e-9 or abs(chair.omega) > 1e-9
            eps = RETARGET_EPS_MOVING if moving else RETARGET_EPS_REST
            if abs(smooth_y - float(traj.target[1])) <= eps:
                return
        traj = plan_move(chair, (s.plane_x, smooth_y, -math.pi / 2.0),
                         s.base)
        traj_t0 = now

    for k in range(len(samples) - 1):
        t = k * dt

        while ptr < len(arrivals) and arrivals[ptr].t_arrival <= t + 1e-12:
            m = arrivals[ptr]
            ts = tracker.ingest(ts, m, now=t)
            if n_meas == 0:
                t_first = m.t_capture
            n_meas += 1
            ptr += 1

        if k % 10 == 0 and ts.mode is TrackMode.TRACKING:
            if record_trace:
                if plan is not None and t >= plan.trigger_time:
                    tau = t - plan.trigger_time
                    q = plan.stroke.joint_positions(tau)
                    head, _, _ = arm_fk(q, chair, s.arm)
                else:
                    head = np.full(3, math.nan)
                trace_rows.append(np.concatenate((
                    [t], samples[k, 1:4],
                    [chair.x, chair.y, chair.heading], head)))

            pred = predictor.rollout(ts, s.plane_x)
            if pred.valid and (observed is None or t < observed.t_cross):
                predictions.append((t, pred))
            if (plan is not None and not locked and replan_gate(
                    t, plan.trigger_time) is Gate.LOCKED):
                locked = True
                locked_radius = math.sqrt(float(
                    np.linalg.eigvalsh(plan.intercept.pos_cov)[-1]))
            desired_y = None
            if not locked and pred.valid:
                radius = math.sqrt(float(
                    np.linalg.eigvalsh(pred.pos_cov)[-1]))
                candidate = None
                try:
                    candidate = planner.plan(pred, chair)
                except InfeasibleStrokeError:
                    pass
                # commit on the first confident prediction, then replace
                # the plan only when a refresh is genuinely tighter: the
                # covariance right after a bounce reads confident again
                # before the velocity transient has actually settled, and
                # locking onto one of those estimates strands the chair
                if (candidate is not None
                        and should_act(pred, s.act_threshold)
                        and candidate.trigger_time > t
                        and radius < plan_radius):
                    plan = candidate
                    plan_radius = radius
                    committed = True
                if plan is not None:
                    desired_y = float(plan.base_target[1])
                elif radius <= PROVISIONAL_SIGMA:
                    if candidate is not None:
                        desired_y = float(candidate.base_target[1])
                    else:
                        desired_y = float(pred.point[1]) + _standoff_y(
                            s.arm, float(pred.point[2]))
            elif locked and pred.valid:
                # the stroke shape is frozen but two handles remain: the
                # chair translates the whole swing laterally, and the
                # trigger slides it in time. Keep centering the swing on
                # the refining prediction through both, gated on the
                # estimate being at least as tight as it was at lock so
                # filter churn does not yank a good plan around
                radius = math.sqrt(float(
                    np.linalg.eigvalsh(pred.pos_cov)[-1]))
                if radius <= locked_radius:
                    dy = float(pred.point[1] - plan.intercept.point[1])
                    dy = min(max(dy, -FOLLOW_CLIP), FOLLOW_CLIP)
                    desired_y = float(plan.base_target[1]) + dy
            if desired_y is not None:
                retarget(desired_y, t)

        cmd = BaseCommand()
        if traj is not None:
            cmd = traj.command(t - traj_t0 + 0.5 * dt)
        chair = step_base(chair, cmd, dt)
        travel += abs(chair.v_lin) * dt
        speed = abs(chair.v_lin)
        ds = (speed - prev_speed) / dt
        max_acc = max(max_acc, ds)
        max_dec = max(max_dec, -ds)
        prev_speed = speed

        t2 = t + dt
        if committed and t2 >= plan.trigger_time:
            tau = t2 - plan.trigger_time
            if tau > plan.stroke.t_total:
                break
            q = plan.stroke.joint_positions(tau)
            qd = plan.stroke.joint_rates(tau)
            head, normal, vel = arm_fk(q, chair, s.arm, qd)
            ball_p = samples[k + 1, 1:4]
            if float(np.linalg.norm(ball_p - head)) <= HIT_RADIUS:
                try:
                    out_v = racket_impact(samples[k + 1, 4:7], vel, normal)
                except NoContactError:
                    pass
                else:
                    contact_point = ball_p.copy()
                    t_contact = t2
                    post = BallState.make(ball_p.copy(), out_v, t=t2)
                    outcome = classify_return(post, s)
                    break
        elif (not committed and observed is not None
                and t2 > observed.t_cross + 0.2):
            break

    tti = math.nan
    if observed is not None and not math.isnan(t_first):
        tti = observed.t_cross - t_first
    if observed is not None and not math.isnan(t_first) and predictions:
        conv = convergence_series(predictions, observed, t_first)
    else:
        conv = np.empty((0, 4))

    return EpisodeResult(
        index=index, outcome=outcome, launch_speed=launch_speed,
        observed=observed, t_first_detection=t_first, time_to_intercept=tti,
        intercept_point=contact_point, t_contact=t_contact,
        committed=committed,
        trigger_time=plan.trigger_time if plan is not None else math.nan,
        chair_travel=travel, max_accel=max_acc, max_decel=max_dec,
        n_measurements=n_meas, n_predictions=len(predictions),
        convergence=conv,
        trace=np.array(trace_rows) if record_trace and trace_rows else None)
