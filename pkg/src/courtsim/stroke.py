"""Fully-extended ground stroke planning: trapezoidal joint profiles
synchronized at ball contact, simplified 7-DoF arm kinematics with three
active joints, racket-ball impact, and wheelchair placement geometry.

The swing uses base yaw, shoulder pitch, and elbow pitch; the other four
joints hold constant. At contact the arm is straight, every active joint
rides its velocity plateau (the elbow at its triangle peak), and slower
ramping joints have started earlier so the peaks coincide.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .predictor import InterceptPrediction
from .world import CourtGeometry, WheelchairState

STROKE_LOCKOUT = 0.05
MIN_CONTACT_HEIGHT = 0.5


class InfeasibleProfileError(ValueError):
    pass


class InfeasibleStrokeError(ValueError):
    def __init__(self, reason: str, message: str = ""):
        super().__init__(message or reason)
        self.reason = reason


class Gate(enum.Enum):
    REPLAN = "replan"
    LOCKED = "locked"


@dataclass(frozen=True)
class JointLimit:
    q_min: float
    q_max: float
    v_max: float
    a_max: float


FOREARM_ROLL = -2.384796
# slightly open face: enough loft to clear the net from the rising
# contact without sending the return past the far baseline
FACE_OPEN_ANGLE = 0.06


def _default_limits():
    return (
        JointLimit(-1.6, 1.6, 3.9, 6.82),                       # base yaw
        JointLimit(-1.05, 1.95, math.sqrt(13.8), 11.5),         # shoulder
        JointLimit(-1.0, 1.0, math.sqrt(38.7), 21.5),           # elbow
    )


def wrist_preset(face_open: float = FACE_OPEN_ANGLE) -> dict:
    """Fixed wrist joints with the racket face opened upward by face_open.

    shoulder_roll reorients the elbow axis so its speed contribution
    combines with yaw instead of stacking vertically; wrist_roll counters
    it so the racket face points down-court at contact. The face tilt
    rides on the shoulder pitch, so low contacts fly flatter: short
    setups that must loft over a bar from knee height open the face
    further than the full court does.
    """
    return {
        "shoulder_roll": FOREARM_ROLL,
        "wrist_pitch": 0.0,
        "wrist_roll": -FOREARM_ROLL + face_open,
        "wrist_yaw": 0.0,
    }


def _default_fixed():
    return wrist_preset()


@dataclass(frozen=True)
class ArmModel:
    base_offset: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 0.0, 0.8]))
    l_upper: float = 0.55
    l_fore: float = 0.30
    l_racket: float = 0.69
    joint_limits: tuple = field(default_factory=_default_limits)
    fixed_joints: dict = field(default_factory=_default_fixed)

    def __post_init__(self):
        if min(self.l_upper, self.l_fore, self.l_racket) <= 0:
            raise ValueError("link lengths must be positive")
        for lim in self.joint_limits:
            if lim.v_max <= 0 or lim.a_max <= 0:
                raise ValueError("joint caps must be positive")
        for name, q in self.fixed_joints.items():
            if abs(q) > math.pi:
                raise ValueError(f"fixed joint {name} outside (-pi, pi)")

    @property
    def reach(self) -> float:
        return self.l_upper + self.l_fore + self.l_racket


# swing geometry generating the joint profiles: total sweep per joint,
# split half before and half after contact
SWING_SPAN = (2.26, 1.57, 1.8)


@dataclass(frozen=True)
class TrapezoidProfile:
    q0: float
    q1: float
    v_peak: float
    a: float
    t_accel: float
    t_cruise: float
    t_total: float
    t_contact: float

    def velocity(self, t: float) -> float:
        s = 1.0 if self.q1 >= self.q0 else -1.0
        if t <= 0.0 or t >= self.t_total:
            return 0.0
        if t < self.t_accel:
            return s * self.a * t
        if t < self.t_accel + self.t_cruise:
            return s * self.v_peak
        return s * self.a * (self.t_total - t)

    def position(self, t: float) -> float:
        s = 1.0 if self.q1 >= self.q0 else -1.0
        if t <= 0.0:
            return self.q0
        if t >= self.t_total:
            return self.q1
        if t < self.t_accel:
            return self.q0 + s * 0.5 * self.a * t * t
        ramp = 0.5 * self.a * self.t_accel ** 2
        if t < self.t_accel + self.t_cruise:
            return self.q0 + s * (ramp + self.v_peak * (t - self.t_accel))
        td = self.t_total - t
        return self.q1 - s * 0.5 * self.a * td * td


def trapezoid(q0: float, q1: float, v_max: float, a_max: float,
              t_contact_fraction: float = 0.5,
              t_total: Optional[float] = None) -> TrapezoidProfile:
    """Minimum-time trapezoid from q0 to q1 (triangle when the distance is
    too short to reach v_max), contact placed at the given fraction of the
    cruise phase. A forced t_total slows the peak to stretch the profile;
    distances unreachable inside it raise InfeasibleProfileError.
    """
    if a_max <= 0 or v_max <= 0:
        raise ValueError("caps must be positive")
    dist = abs(q1 - q0)
    if dist == 0.0:
        return TrapezoidProfile(q0, q1, 0.0, a_max, 0.0, 0.0, 0.0, 0.0)
    if t_total is None:
        v = min(v_max, math.sqrt(dist * a_max))
    else:
        disc = a_max * a_max * t_total * t_total - 4.0 * a_max * dist
        if disc < 0.0:
            raise InfeasibleProfileError(
                f"cannot cover {dist} rad in {t_total} s at accel {a_max}")
        v = 0.5 * (a_max * t_total - math.sqrt(disc))
        if v > v_max + 1e-12:
            raise InfeasibleProfileError(
                f"forced duration {t_total} s needs peak {v} > {v_max}")
        v = min(v, v_max)
    t_acc = v / a_max
    t_cruise = (dist - v * t_acc) / v
    if t_cruise < 1e-12:
        # critical triangle up to float residue
        t_cruise = 0.0
    return TrapezoidProfile(
        q0=q0, q1=q1, v_peak=v, a=a_max, t_accel=t_acc, t_cruise=t_cruise,
        t_total=2.0 * t_acc + t_cruise,
        t_contact=t_acc + t_contact_fraction * t_cruise)


@dataclass(frozen=True)
class StrokePlan:
    start: np.ndarray
    contact: np.ndarray
    end: np.ndarray
    profiles: tuple
    start_delays: np.ndarray
    t_to_contact: float
    trigger_time: float

    def joint_positions(self, t: float) -> np.ndarray:
        """Joint configuration t seconds after the stroke trigger."""
        return np.array([
            p.position(t - d)
            for p, d in zip(self.profiles, self.start_delays)])

    def joint_rates(self, t: float) -> np.ndarray:
        return np.array([
            p.velocity(t - d)
            for p, d in zip(self.profiles, self.start_delays)])

    @property
    def t_total(self) -> float:
        return max(p.t_total + d
                   for p, d in zip(self.profiles, self.start_delays))


def _rot_z(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _rot_y(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rot_x(t):
    c, s = math.cos(t), math.sin(t)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def arm_fk(q, base_pose: WheelchairState, model: ArmModel,
           qdot=None):
    """Racket head center, face normal, and head velocity for active joints
    q = (base_yaw, shoulder_pitch, elbow_pitch).

    Shoulder pitch is positive raising the arm; elbow pitch is the bend
    away from the straight arm, zero at full extension. Head velocity sums
    each joint's angular contribution about its world axis plus the chair's
    own planar twist.
    """
    q = np.asarray(q, dtype=float)
    qdot = np.zeros(3) if qdot is None else np.asarray(qdot, dtype=float)
    chair_pos = np.array([base_pose.x, base_pose.y, 0.0])
    roll = model.fixed_joints["shoulder_roll"]

    r01 = _rot_z(base_pose.heading + q[0])
    p_base = chair_pos + _rot_z(base_pose.heading) @ model.base_offset
    r02 = r01 @ _rot_y(-q[1])
    d_upper = r02 @ np.array([1.0, 0.0, 0.0])
    p_elbow = p_base + model.l_upper * d_upper
    r0f = r02 @ _rot_x(roll) @ _rot_y(-q[2])
    d_fore = r0f @ np.array([1.0, 0.0, 0.0])
    r_wrist = (_rot_x(model.fixed_joints["wrist_roll"])
               @ _rot_y(-model.fixed_joints["wrist_pitch"])
               @ _rot_z(model.fixed_joints["wrist_yaw"]))
    shaft = r0f @ r_wrist @ np.array([1.0, 0.0, 0.0])
    head = p_elbow + model.l_fore * d_fore + model.l_racket * shaft
    normal = r0f @ r_wrist @ np.array([0.0, 1.0, 0.0])

    axes = (
        np.array([0.0, 0.0, 1.0]),
        r01 @ np.array([0.0, -1.0, 0.0]),
        r02 @ _rot_x(roll) @ np.array([0.0, -1.0, 0.0]),
    )
    origins = (p_base, p_base, p_elbow)
    vel = np.zeros(3)
    for rate, axis, origin in zip(qdot, axes, origins):
        vel += rate * np.cross(axis, head - origin)
    # chair twist carries the whole chain
    fwd = np.array([math.cos(base_pose.heading),
                    math.sin(base_pose.heading), 0.0])
    vel += base_pose.v_lin * fwd
    vel += base_pose.omega * np.cross(np.array([0.0, 0.0, 1.0]),
                                      head - chair_pos)
    return head, normal, vel


class StrokePlanner:
    """Turns a confident interception prediction into chair placement, a
    synchronized swing, and a trigger time."""

    def __init__(self, model: Optional[ArmModel] = None,
                 court: Optional[CourtGeometry] = None,
                 z_min: float = MIN_CONTACT_HEIGHT,
                 lockout: float = STROKE_LOCKOUT,
                 lateral_margin: float = 2.0):
        self.model = model or ArmModel()
        self.court = court
        self.z_min = z_min
        self.lockout = lockout
        self.lateral_margin = lateral_margin

    def contact_elevation(self, z: float) -> float:
        """Shoulder pitch putting the straight arm's head at height z."""
        base_z = float(self.model.base_offset[2])
        if z < self.z_min:
            raise InfeasibleStrokeError(
                "below_min_height",
                f"contact at z={z} under minimum {self.z_min}")
        s = (z - base_z) / self.model.reach
        if s > 1.0:
            raise InfeasibleStrokeError(
                "above_max_reach",
                f"contact at z={z} beyond reach {base_z + self.model.reach}")
        return math.asin(s)

    def plan_stroke(self, intercept: InterceptPrediction) -> StrokePlan:
        if not intercept.valid:
            raise ValueError("cannot plan a stroke on an invalid prediction")
        elev = self.contact_elevation(float(intercept.point[2]))
        contact = np.array([0.0, elev, 0.0])
        half = 0.5 * np.asarray(SWING_SPAN)
        start = contact - half
        end = contact + half
        profiles = []
        offsets = []
        for i, lim in enumerate(self.model.joint_limits):
            for qc in (start[i], contact[i], end[i]):
                if not lim.q_min - 1e-9 <= qc <= lim.q_max + 1e-9:
                    raise InfeasibleStrokeError(
                        "outside_joint_limits",
                        f"joint {i} needs {qc}, limits "
                        f"[{lim.q_min}, {lim.q_max}]")
            prof = trapezoid(start[i], end[i], lim.v_max, lim.a_max, 0.5)
            profiles.append(prof)
            offsets.append(prof.t_contact)
        t_to_contact = max(offsets)
        delays = np.array([t_to_contact - o for o in offsets])
        return StrokePlan(
            start=start, contact=contact, end=end,
            profiles=tuple(profiles), start_delays=delays,
            t_to_contact=t_to_contact,
            trigger_time=intercept.t_cross - t_to_contact)

    def plan(self, intercept: InterceptPrediction,
             chair: WheelchairState) -> "Plan":
        stroke = self.plan_stroke(intercept)
        elev = stroke.contact[1]
        # at contact the arm points along the chair heading; stand off by
        # the horizontal reach so the extended racket meets the ball
        offset = self.model.reach * math.cos(elev)
        target = np.array([float(intercept.point[0]),
                           float(intercept.point[1]) + offset,
                           -math.pi / 2.0])
        if self.court is not None:
            if not 0.0 <= target[0] < self.court.net_x:
                raise InfeasibleStrokeError(
                    "behind_net", f"chair target x={target[0]}")
            if abs(target[1]) > (self.court.width_doubles / 2.0
                                 + self.lateral_margin):
                raise InfeasibleStrokeError(
                    "outside_lateral_workspace", f"chair target y={target[1]}")
        return Plan(base_target=target, stroke=stroke, intercept=intercept,
                    lockout_time=self.lockout)


@dataclass(frozen=True)
class Plan:
    base_target: np.ndarray        # x, y, heading
    stroke: StrokePlan
    intercept: InterceptPrediction
    lockout_time: float = STROKE_LOCKOUT

    @property
    def trigger_time(self) -> float:
        return self.stroke.trigger_time


def replan_gate(now: float, trigger_time: float,
                lockout: float = STROKE_LOCKOUT) -> Gate:
    return Gate.LOCKED if now >= trigger_time - lockout else Gate.REPLAN


def write_stroke_csv(plan: StrokePlan, path) -> None:
    """Joint positions and rates at 1 ms resolution from trigger to swing
    end, one row per sample."""
    n = int(round(plan.t_total / 0.001)) + 1
    rows = np.empty((n, 7))
    for i in range(n):
        t = i * 0.001
        rows[i, 0] = t
        rows[i, 1:4] = plan.joint_positions(t)
        rows[i, 4:7] = plan.joint_rates(t)
    np.savetxt(
        path, rows, fmt="%.10g", delimiter=",",
        header="t,q_base_yaw,q_shoulder,q_elbow,qd_base_yaw,qd_shoulder,"
               "qd_elbow", comments="")


class NoContactError(ValueError):
    pass


def racket_impact(ball_v, racket_velocity, racket_normal,
                  e_r: float = 0.85) -> np.ndarray:
    """Outgoing ball velocity from a rigid racket-plane collision: the
    normal component of the relative velocity reflects scaled by e_r, the
    tangential component carries through."""
    n = np.asarray(racket_normal, dtype=float)
    n = n / np.linalg.norm(n)
    rel = np.asarray(ball_v, dtype=float) - np.asarray(racket_velocity,
                                                       dtype=float)
    vn = float(rel @ n)
    if vn >= 0.0:
        raise NoContactError("ball receding from the racket face")
    return np.asarray(racket_velocity) + rel - (1.0 + e_r) * vn * n
