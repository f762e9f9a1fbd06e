"""Differential-drive wheelchair base: wheel-speed conversion, a
rotate-translate-rotate point-to-point planner with asymmetric
accelerate/brake trapezoids, and exact unicycle integration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .world import PHYSICS_DT, WheelchairState


@dataclass(frozen=True)
class BaseConfig:
    track_width: float = 0.66
    wheel_radius: float = 0.30
    gear_reduction: float = 20.0      # motor revs per wheel rev
    v_max_lin: float = 4.34
    v_max_ang: float = 5.8
    a_max: float = 1.42
    d_max: float = 1.60               # braking, may exceed a_max

    def __post_init__(self):
        vals = (self.track_width, self.wheel_radius, self.gear_reduction,
                self.v_max_lin, self.v_max_ang, self.a_max, self.d_max)
        if min(vals) <= 0:
            raise ValueError("all base parameters must be positive")


@dataclass(frozen=True)
class BaseCommand:
    v: float = 0.0
    omega: float = 0.0


@dataclass(frozen=True)
class WheelSpeeds:
    left: float       # rad/s at the wheel
    right: float
    clamped: bool = False


def wheel_speeds(cmd: BaseCommand, cfg: BaseConfig) -> WheelSpeeds:
    """Command to per-wheel angular rates; out-of-cap commands are clamped
    and flagged."""
    v = min(max(cmd.v, -cfg.v_max_lin), cfg.v_max_lin)
    w = min(max(cmd.omega, -cfg.v_max_ang), cfg.v_max_ang)
    clamped = (v != cmd.v) or (w != cmd.omega)
    half = 0.5 * cfg.track_width
    return WheelSpeeds(
        left=(v - w * half) / cfg.wheel_radius,
        right=(v + w * half) / cfg.wheel_radius,
        clamped=clamped)


def base_command(left: float, right: float, cfg: BaseConfig) -> BaseCommand:
    """Exact inverse of wheel_speeds on unclamped commands."""
    v = 0.5 * cfg.wheel_radius * (left + right)
    w = cfg.wheel_radius * (right - left) / cfg.track_width
    return BaseCommand(v=v, omega=w)


@dataclass(frozen=True)
class SpeedProfile:
    """Nonnegative speed ramping up at `a`, cruising, braking at `d`;
    degenerates to a triangle when the distance is short. A nonzero v0
    starts the ramp already moving (the replanner carries speed through a
    retarget); speed itself is still reported as 0 at exactly t=0, which
    executors never sample (commands are read at tick midpoints)."""
    dist: float
    v_peak: float
    a: float
    d: float
    t_accel: float
    t_cruise: float
    t_decel: float
    v0: float = 0.0

    @property
    def total(self) -> float:
        return self.t_accel + self.t_cruise + self.t_decel

    def speed(self, t: float) -> float:
        if t <= 0.0 or t >= self.total:
            return 0.0
        if t < self.t_accel:
            return self.v0 + self.a * t
        if t < self.t_accel + self.t_cruise:
            return self.v_peak
        return self.d * (self.total - t)


def speed_profile(dist: float, v_max: float, a: float,
                  d: float) -> SpeedProfile:
    if dist < 0:
        raise ValueError("profile distance must be nonnegative")
    if dist == 0.0:
        return SpeedProfile(0.0, 0.0, a, d, 0.0, 0.0, 0.0)
    v = min(v_max, math.sqrt(2.0 * dist * a * d / (a + d)))
    t_a = v / a
    t_d = v / d
    cruise_dist = dist - 0.5 * v * (t_a + t_d)
    t_c = cruise_dist / v
    if t_c < 1e-12:
        t_c = 0.0
    return SpeedProfile(dist, v, a, d, t_a, t_c, t_d)


def speed_profile_from(v0: float, dist: float, v_max: float, a: float,
                       d: float) -> SpeedProfile:
    """Profile that starts at speed v0 and comes to rest after `dist`.

    Caller must ensure dist >= v0^2 / 2d (enough room to stop); the pure
    braking case comes out with an empty acceleration phase.
    """
    if v0 <= 0.0:
        return speed_profile(dist, v_max, a, d)
    stop_dist = 0.5 * v0 * v0 / d
    if dist < stop_dist - 1e-12:
        raise ValueError("cannot stop within the requested distance")
    dist = max(dist, stop_dist)
    v = math.sqrt((2.0 * dist * a * d + d * v0 * v0) / (a + d))
    v = max(v, v0)
    if v > v_max:
        # cap at v_max unless already above it, then just hold and brake
        v = max(v_max, v0)
    t_a = (v - v0) / a
    t_d = v / d
    cruise_dist = dist - (v0 * t_a + 0.5 * a * t_a * t_a) - 0.5 * v * t_d
    t_c = cruise_dist / v
    if t_c < 1e-12:
        t_c = 0.0
    return SpeedProfile(dist, v, a, d, t_a, t_c, t_d, v0)


@dataclass(frozen=True)
class TrajectorySegment:
    kind: str            # "turn" or "drive"
    sign: float          # direction of the turn / drive
    profile: SpeedProfile

    @property
    def duration(self) -> float:
        return self.profile.total

    def command(self, t: float) -> BaseCommand:
        speed = self.sign * self.profile.speed(t)
        if self.kind == "turn":
            return BaseCommand(v=0.0, omega=speed)
        return BaseCommand(v=speed, omega=0.0)


@dataclass(frozen=True)
class BrakeSegment:
    """Ramp both twist channels to rest at the braking caps; prepended when
    a new plan replaces one still executing."""
    v0: float
    w0: float
    d_lin: float
    d_ang: float
    kind: str = "brake"

    @property
    def duration(self) -> float:
        return max(abs(self.v0) / self.d_lin, abs(self.w0) / self.d_ang)

    def command(self, t: float) -> BaseCommand:
        v = math.copysign(max(abs(self.v0) - self.d_lin * t, 0.0), self.v0)
        w = math.copysign(max(abs(self.w0) - self.d_ang * t, 0.0), self.w0)
        return BaseCommand(v=v, omega=w)


@dataclass(frozen=True)
class BaseTrajectory:
    segments: tuple
    target: np.ndarray   # x, y, heading

    @property
    def total_time(self) -> float:
        return sum(s.duration for s in self.segments)

    def command(self, t: float) -> BaseCommand:
        for seg in self.segments:
            if t < seg.duration:
                return seg.command(t)
            t -= seg.duration
        return BaseCommand()


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def goto(current: WheelchairState, target, cfg: BaseConfig) -> BaseTrajectory:
    """Rotate in place toward the target, drive straight, rotate to the
    final heading. Turn ramps map the linear accel caps through the half
    track width, so wheel accelerations match straight-line driving. The
    straight leg runs in reverse when that needs less turning, so a chair
    holding station swaps between forward and backward without spinning."""
    target = np.asarray(target, dtype=float)
    alpha_a = cfg.a_max / (0.5 * cfg.track_width)
    alpha_d = cfg.d_max / (0.5 * cfg.track_width)

    def turn(dtheta: float) -> Optional[TrajectorySegment]:
        if abs(dtheta) < 1e-12:
            return None
        prof = speed_profile(abs(dtheta), cfg.v_max_ang, alpha_a, alpha_d)
        return TrajectorySegment("turn", math.copysign(1.0, dtheta), prof)

    dx = target[0] - current.x
    dy = target[1] - current.y
    dist = math.hypot(dx, dy)
    segments = []
    heading = current.heading
    if dist >= 1e-12:
        bearing = math.atan2(dy, dx)
        drive_sign = 1.0
        if abs(_wrap(bearing - heading)) > 0.5 * math.pi + 1e-12:
            drive_sign = -1.0
            bearing = _wrap(bearing + math.pi)
        seg = turn(_wrap(bearing - heading))
        if seg is not None:
            segments.append(seg)
        heading = bearing
        segments.append(TrajectorySegment(
            "drive", drive_sign, speed_profile(dist, cfg.v_max_lin, cfg.a_max,
                                               cfg.d_max)))
    seg = turn(_wrap(target[2] - heading))
    if seg is not None:
        segments.append(seg)
    return BaseTrajectory(segments=tuple(segments), target=target)


def plan_move(current: WheelchairState, target,
              cfg: BaseConfig) -> BaseTrajectory:
    """Plan toward target from a possibly moving state.

    Driving straight with the target on the current line of motion and
    enough room to stop keeps the speed: the drive is simply extended or
    shortened. Otherwise brake the current twist to rest inside the decel
    caps and rotate-drive-rotate from the projected rest pose. Collapses
    to goto when already at rest. The rest pose is projected with the same
    midpoint-sampled integrator drive() uses, so executing at the physics
    step lands on the plan exactly."""
    if abs(current.v_lin) < 1e-12 and abs(current.omega) < 1e-12:
        return goto(current, target, cfg)
    tx, ty, th_t = float(target[0]), float(target[1]), float(target[2])
    if abs(current.omega) < 1e-12 and abs(current.v_lin) > 1e-12:
        sgn = math.copysign(1.0, current.v_lin)
        ux = sgn * math.cos(current.heading)
        uy = sgn * math.sin(current.heading)
        wx, wy = tx - current.x, ty - current.y
        along = wx * ux + wy * uy
        lateral = abs(wx * uy - wy * ux)
        v0 = abs(current.v_lin)
        if (lateral < 1e-9
                and abs(_wrap(th_t - current.heading)) < 1e-9
                and along >= 0.5 * v0 * v0 / cfg.d_max - 1e-12):
            prof = speed_profile_from(v0, along, cfg.v_max_lin,
                                      cfg.a_max, cfg.d_max)
            seg = TrajectorySegment("drive", sgn, prof)
            return BaseTrajectory(segments=(seg,),
                                  target=np.array([tx, ty, th_t]))
    alpha_d = cfg.d_max / (0.5 * cfg.track_width)
    brake = BrakeSegment(v0=current.v_lin, w0=current.omega,
                         d_lin=cfg.d_max, d_ang=alpha_d)
    rest = current
    t = 0.0
    while t < brake.duration - 1e-12:
        h = min(PHYSICS_DT, brake.duration - t)
        rest = step_base(rest, brake.command(t + 0.5 * h), h)
        t += h
    tail = goto(rest, target, cfg)
    return BaseTrajectory(segments=(brake,) + tail.segments,
                          target=tail.target)


def step_base(state: WheelchairState, cmd: BaseCommand, dt: float,
              lag_tau: float = 0.0) -> WheelchairState:
    """Exact constant-twist arc over dt. A positive lag_tau makes the
    executed twist chase the command first-order instead of jumping."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if lag_tau > 0.0:
        k = math.exp(-dt / lag_tau)
        v = cmd.v + (state.v_lin - cmd.v) * k
        w = cmd.omega + (state.omega - cmd.omega) * k
    else:
        v, w = cmd.v, cmd.omega
    th = state.heading
    if w == 0.0:
        x = state.x + v * dt * math.cos(th)
        y = state.y + v * dt * math.sin(th)
        th2 = th
    else:
        th2 = th + w * dt
        r = v / w
        x = state.x + r * (math.sin(th2) - math.sin(th))
        y = state.y - r * (math.cos(th2) - math.cos(th))
    return WheelchairState(x=x, y=y, heading=th2, v_lin=v, omega=w,
                           t=state.t + dt)


def drive(state: WheelchairState, traj: BaseTrajectory,
          dt: float = PHYSICS_DT, lag_tau: float = 0.0):
    """Execute a trajectory tick by tick; commands are sampled at tick
    midpoints so ramp integration stays second order. Returns every state
    including the initial one."""
    states = [state]
    total = traj.total_time
    t = 0.0
    while t < total - 1e-12:
        h = min(dt, total - t)
        cmd = traj.command(t + 0.5 * h)
        state = step_base(state, cmd, h, lag_tau=lag_tau)
        states.append(state)
        t += h
    return states


def write_base_csv(path, states, cfg: BaseConfig) -> None:
    rows = np.empty((len(states), 8))
    for i, s in enumerate(states):
        ws = wheel_speeds(BaseCommand(s.v_lin, s.omega), cfg)
        rows[i] = (s.t, s.x, s.y, s.heading, s.v_lin, s.omega,
                   ws.left, ws.right)
    np.savetxt(path, rows, fmt="%.10g", delimiter=",",
               header="t,x,y,heading,v,omega,omega_left,omega_right",
               comments="")
