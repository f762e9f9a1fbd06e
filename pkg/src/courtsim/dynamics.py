"""Ball flight model: gravity + quadratic drag, inelastic bounce, RK4 stepping
with bisected floor contact, and a closed-form drag-free oracle.

The continuous model is

    dp/dt = v
    dv/dt = (0, 0, -g) - (rho Cd A / 2 m) |v| v

and a bounce maps (vx, vy, vz) to (k vx, k vy, -e vz) with the center clamped
to the ball radius. The same jitted step (kernels.flight_step) drives the
truth simulation, the tracker's mean propagation, and the interception
rollout, so those paths agree bitwise.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from . import kernels
from .world import BallState, WorldConfig


def param_vector(w: WorldConfig) -> np.ndarray:
    """Pack the physics constants for the jitted kernels."""
    return np.array([
        w.gravity,
        w.drag_factor,
        w.ball.radius,
        w.ball.restitution,
        w.ball.horizontal_retention,
    ])


def flight_derivative(s: BallState, w: WorldConfig):
    """(dp, dv) of the flight ODE at state s."""
    vx, vy, vz = float(s.v[0]), float(s.v[1]), float(s.v[2])
    ax, ay, az = kernels.flight_accel(vx, vy, vz, w.gravity, w.drag_factor)
    return s.v.copy(), np.array([ax, ay, az])


def drag_jacobian(v, w: WorldConfig) -> np.ndarray:
    """d(dv)/dv, the 3x3 linearization of the drag acceleration."""
    v = np.asarray(v, dtype=float)
    return kernels.drag_jac(v[0], v[1], v[2], w.drag_factor)


def resolve_bounce(s: BallState, w: WorldConfig) -> BallState:
    """Apply the bounce map to a state in floor contact.

    Requires a descending ball (vz < 0); the vertical component is reflected
    and scaled by the restitution, the horizontal components scaled by the
    retention factor, and the center clamped to the ball radius.
    """
    if s.v[2] >= 0.0:
        raise ValueError("resolve_bounce called with non-descending ball (vz >= 0)")
    k = w.ball.horizontal_retention
    e = w.ball.restitution
    p = s.p.copy()
    p[2] = w.ball.radius
    v = np.array([k * s.v[0], k * s.v[1], -e * s.v[2]])
    return BallState(p=p, v=v, t=s.t, bounce_count=s.bounce_count + 1)


def step(s: BallState, dt: float, w: WorldConfig) -> BallState:
    """One RK4 step of length dt with floor-contact handling."""
    r = kernels.flight_step(
        float(s.p[0]), float(s.p[1]), float(s.p[2]),
        float(s.v[0]), float(s.v[1]), float(s.v[2]),
        dt, param_vector(w),
    )
    return BallState(
        p=np.array([r[0], r[1], r[2]]),
        v=np.array([r[3], r[4], r[5]]),
        t=s.t + dt,
        bounce_count=s.bounce_count + r[6],
    )


def dragless_flight(s: BallState, w: WorldConfig, t: float) -> BallState:
    """Closed-form ballistic arc with drag off and no floor: the oracle the
    integrator is validated against."""
    g = w.gravity
    p = s.p + s.v * t
    p[2] -= 0.5 * g * t * t
    v = s.v.copy()
    v[2] -= g * t
    return BallState(p=p, v=v, t=s.t + t, bounce_count=s.bounce_count)


@dataclass(frozen=True, eq=False)
class BounceEvent:
    t: float
    position: np.ndarray
    v_pre: np.ndarray
    v_post: np.ndarray


@dataclass(frozen=True)
class TimeHorizon:
    t_end: float


@dataclass(frozen=True)
class PlaneCrossing:
    """Stop when the ball crosses x = plane_x moving in the given direction
    (+1 or -1). horizon bounds the search."""

    plane_x: float
    direction: int
    horizon: float = 3.0


@dataclass(frozen=True)
class BounceLimit:
    max_bounces: int
    horizon: float = 10.0


StopCondition = Union[TimeHorizon, PlaneCrossing, BounceLimit]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled flight: rows of (t, px, py, pz, vx, vy, vz, bounce_count) at
    the physics step, plus exact bounce events."""

    samples: np.ndarray
    events: list

    def final_state(self) -> BallState:
        r = self.samples[-1]
        return BallState(p=r[1:4].copy(), v=r[4:7].copy(), t=float(r[0]),
                         bounce_count=int(r[7]))

    def to_csv(self, path) -> None:
        header = "t,px,py,pz,vx,vy,vz,bounce_count"
        np.savetxt(path, self.samples, fmt="%.10g", delimiter=",",
                   header=header, comments="")


@dataclass(frozen=True, eq=False)
class FlightResult:
    trajectory: Trajectory
    crossing: Optional[BallState]
    reason: str  # "horizon", "plane", or "bounce_limit"


def simulate_flight(s: BallState, w: WorldConfig, stop: StopCondition) -> FlightResult:
    """Integrate at the physics step until the stop condition fires.

    Plane crossings and bounces are located by bisection to within a
    microsecond; the crossing state has its x pinned to the plane exactly.
    A PlaneCrossing stop whose horizon elapses first yields crossing=None with
    reason "horizon".
    """
    dt = w.physics_dt
    params = param_vector(w)

    if isinstance(stop, TimeHorizon):
        horizon = stop.t_end - s.t
        if horizon < 0:
            raise ValueError("stop horizon precedes the state time")
    elif isinstance(stop, PlaneCrossing):
        if stop.direction not in (-1, 1):
            raise ValueError("plane crossing direction must be +1 or -1")
        horizon = stop.horizon
    else:
        horizon = stop.horizon

    n_max = max(1, int(np.ceil(horizon / dt - 1e-9)))
    rows = np.empty((n_max + 1, 8))
    events: list[BounceEvent] = []
    px, py, pz = float(s.p[0]), float(s.p[1]), float(s.p[2])
    vx, vy, vz = float(s.v[0]), float(s.v[1]), float(s.v[2])
    bc = s.bounce_count
    rows[0] = (s.t, px, py, pz, vx, vy, vz, bc)

    crossing = None
    reason = "horizon"
    n = 1
    for i in range(1, n_max + 1):
        r = kernels.flight_step(px, py, pz, vx, vy, vz, dt, params)
        t_now = s.t + i * dt
        if r[6] > 0:
            events.append(BounceEvent(
                t=s.t + (i - 1) * dt + r[7],
                position=np.array([r[8], r[9], r[10]]),
                v_pre=np.array([r[11], r[12], r[13]]),
                v_post=np.array([r[14], r[15], r[16]]),
            ))
        if isinstance(stop, PlaneCrossing):
            crossed = (px < stop.plane_x <= r[0]) if stop.direction > 0 \
                else (px > stop.plane_x >= r[0])
            if crossed:
                lo, hi = 0.0, dt
                while hi - lo > kernels.BOUNCE_BISECT_TOL:
                    mid = 0.5 * (lo + hi)
                    c = kernels.rk4_free(px, py, pz, vx, vy, vz, mid,
                                         params[0], params[1])
                    beyond = (c[0] >= stop.plane_x) if stop.direction > 0 \
                        else (c[0] <= stop.plane_x)
                    if beyond:
                        hi = mid
                    else:
                        lo = mid
                h = 0.5 * (lo + hi)
                c = kernels.rk4_free(px, py, pz, vx, vy, vz, h,
                                     params[0], params[1])
                crossing = BallState(
                    p=np.array([stop.plane_x, c[1], c[2]]),
                    v=np.array([c[3], c[4], c[5]]),
                    t=s.t + (i - 1) * dt + h,
                    bounce_count=bc,
                )
                rows[i] = (t_now, r[0], r[1], r[2], r[3], r[4], r[5], bc + r[6])
                n = i + 1
                reason = "plane"
                break
        px, py, pz, vx, vy, vz = r[0], r[1], r[2], r[3], r[4], r[5]
        bc += r[6]
        rows[i] = (t_now, px, py, pz, vx, vy, vz, bc)
        n = i + 1
        if isinstance(stop, BounceLimit) and bc >= stop.max_bounces:
            reason = "bounce_limit"
            break
        if isinstance(stop, TimeHorizon) and t_now >= stop.t_end - 1e-12:
            reason = "horizon"
            break

    return FlightResult(trajectory=Trajectory(samples=rows[:n].copy(), events=events),
                        crossing=crossing, reason=reason)
