"""Stroke planning: trapezoid profiles, arm kinematics, plan geometry,
replan gating, and racket impact."""
import math

import numpy as np
import pytest

from courtsim.predictor import InterceptPrediction
from courtsim.stroke import (
    ArmModel,
    FACE_OPEN_ANGLE,
    Gate,
    InfeasibleProfileError,
    InfeasibleStrokeError,
    NoContactError,
    StrokePlanner,
    SWING_SPAN,
    arm_fk,
    racket_impact,
    replan_gate,
    trapezoid,
    write_stroke_csv,
)
from courtsim.world import WheelchairState, standard_court

YAW_V, SH_V, EL_V = 3.9, math.sqrt(13.8), math.sqrt(38.7)
YAW_A, SH_A, EL_A = 6.82, 11.5, 21.5


def intercept_at(y=-1.0, z=1.3, x=4.5, t_cross=2.0):
    return InterceptPrediction(
        plane_x=x, point=np.array([x, y, z]), t_cross=t_cross,
        pos_cov=np.eye(3) * 1e-4, valid=True)


def static_pose(x=0.0, y=0.0, heading=0.0):
    return WheelchairState(x=x, y=y, heading=heading)


# ---------------------------------------------------------------- trapezoid

def test_trapezoid_degenerate_zero():
    p = trapezoid(0.7, 0.7, 2.0, 5.0)
    assert p.t_accel == 0.0 and p.t_cruise == 0.0 and p.t_total == 0.0
    assert p.v_peak == 0.0 and p.t_contact == 0.0
    assert p.velocity(0.0) == 0.0
    assert p.position(0.3) == 0.7


@pytest.mark.parametrize("q0,q1,vmax,amax", [
    (0.0, 2.0, 1.5, 3.0),     # trapezoid
    (0.0, 0.3, 5.0, 3.0),     # triangle, never reaches vmax
    (1.0, -2.0, 2.0, 8.0),    # negative direction
    (-0.9, 0.9, EL_V, EL_A),  # critical triangle, peak exactly at vmax
])
def test_trapezoid_integral_matches_displacement(q0, q1, vmax, amax):
    p = trapezoid(q0, q1, vmax, amax)
    # exact trapezoidal quadrature: include the velocity kinks in the grid
    ts = np.unique(np.concatenate([
        np.linspace(0.0, p.t_total, 2001),
        [p.t_accel, p.t_accel + p.t_cruise]]))
    vs = np.array([p.velocity(t) for t in ts])
    assert abs(np.trapezoid(vs, ts) - (q1 - q0)) < 1e-9
    assert np.abs(vs).max() <= p.v_peak + 1e-12
    assert p.v_peak <= vmax + 1e-12
    assert p.position(p.t_total) == q1
    assert p.position(0.0) == q0


def test_trapezoid_velocity_slopes():
    p = trapezoid(0.0, 2.0, 1.5, 3.0)
    ts = np.arange(0.0, p.t_total, 0.001)
    vs = np.array([p.velocity(t) for t in ts])
    slopes = np.diff(vs) / 0.001
    assert np.abs(slopes).max() <= p.a + 1e-6
    # cruise segment is flat
    mid = (ts[:-1] > p.t_accel) & (ts[1:] < p.t_accel + p.t_cruise)
    assert np.abs(slopes[mid]).max() < 1e-12


def test_trapezoid_elbow_critical_triangle():
    # sweep 1.8 rad at v=sqrt(38.7), a=21.5: v^2/a equals the sweep exactly,
    # so the profile is a triangle whose peak touches the velocity cap
    p = trapezoid(-0.9, 0.9, EL_V, EL_A)
    assert p.t_cruise == 0.0
    assert abs(p.v_peak - 6.22093240599832) < 1e-12
    assert abs(p.t_accel - 0.2893456933) < 1e-9
    assert abs(p.t_total - 0.5786913866) < 1e-9
    assert p.t_contact == p.t_accel
    assert abs(p.velocity(p.t_contact) - 6.22093240599832) < 1e-9


def test_trapezoid_shoulder_and_yaw_plateaus():
    sh = trapezoid(-0.785, 0.785, SH_V, SH_A)
    assert abs(sh.v_peak - 3.71483512420134) < 1e-12
    assert abs(sh.t_accel - 0.3230291412) < 1e-9
    assert abs(sh.t_cruise - 0.0996006518) < 1e-9
    assert abs(sh.velocity(sh.t_contact) - 3.71483512420134) < 1e-12

    yaw = trapezoid(-1.13, 1.13, YAW_V, YAW_A)
    assert abs(yaw.v_peak - 3.9) < 1e-12
    assert abs(yaw.t_accel - 0.5718475073) < 1e-9
    assert abs(yaw.t_cruise - 0.0076396722) < 1e-9
    assert abs(yaw.t_total - 1.1513346868) < 1e-9
    assert abs(yaw.velocity(yaw.t_contact) - 3.9) < 1e-12


def test_trapezoid_forced_total_time_stretches():
    p = trapezoid(0.0, 1.0, 10.0, 2.0, t_total=2.0)
    assert abs(p.t_total - 2.0) < 1e-12
    ts = np.unique(np.concatenate([
        np.linspace(0.0, p.t_total, 2001),
        [p.t_accel, p.t_accel + p.t_cruise]]))
    vs = np.array([p.velocity(t) for t in ts])
    assert abs(np.trapezoid(vs, ts) - 1.0) < 1e-9
    assert p.v_peak < 10.0


def test_trapezoid_forced_total_time_infeasible():
    with pytest.raises(InfeasibleProfileError):
        trapezoid(0.0, 1.0, 10.0, 2.0, t_total=1.0)
    # duration reachable only above the velocity cap
    with pytest.raises(InfeasibleProfileError):
        trapezoid(0.0, 1.0, 5.0, 100.0, t_total=0.21)


def test_trapezoid_bad_caps():
    with pytest.raises(ValueError):
        trapezoid(0.0, 1.0, 0.0, 2.0)
    with pytest.raises(ValueError):
        trapezoid(0.0, 1.0, 2.0, -1.0)


# ------------------------------------------------------------------ arm FK

def test_arm_fk_static_zero_velocity():
    model = ArmModel()
    head, normal, vel = arm_fk([0.0, 0.0, 0.0], static_pose(), model)
    assert np.allclose(vel, 0.0)
    assert np.allclose(head, [model.reach, 0.0, 0.8])
    assert abs(np.linalg.norm(normal) - 1.0) < 1e-12
    # face points sideways-up for the straight arm at heading 0
    assert np.allclose(
        normal, [0.0, math.cos(FACE_OPEN_ANGLE), math.sin(FACE_OPEN_ANGLE)],
        atol=1e-12)


def test_arm_fk_base_translation_carries_head():
    pose = WheelchairState(x=0.0, y=0.0, heading=0.0, v_lin=1.3)
    _, _, vel = arm_fk([0.0, 0.4, 0.0], pose, ArmModel())
    assert np.allclose(vel, [1.3, 0.0, 0.0])


def test_arm_fk_base_spin_gives_tangential_velocity():
    model = ArmModel()
    pose = WheelchairState(x=2.0, y=-1.0, heading=0.3, omega=0.8)
    head, _, vel = arm_fk([0.2, 0.5, -0.1], pose, model)
    lever = head - np.array([2.0, -1.0, 0.0])
    assert np.allclose(vel, 0.8 * np.cross([0.0, 0.0, 1.0], lever))


def test_arm_fk_velocity_matches_finite_differences():
    model = ArmModel()
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(1000):
        q = rng.uniform(-1.2, 1.2, 3)
        qd = rng.uniform(-6.0, 6.0, 3)
        pose = WheelchairState(
            x=rng.uniform(-2, 2), y=rng.uniform(-2, 2),
            heading=rng.uniform(-3, 3), v_lin=rng.uniform(-1.5, 1.5),
            omega=rng.uniform(-2, 2))

        def perturbed(s):
            mid = pose.heading + 0.5 * s * pose.omega
            return (q + s * qd, WheelchairState(
                x=pose.x + s * pose.v_lin * math.cos(mid),
                y=pose.y + s * pose.v_lin * math.sin(mid),
                heading=pose.heading + s * pose.omega,
                v_lin=pose.v_lin, omega=pose.omega))

        _, _, vel = arm_fk(q, pose, model, qd)
        qa, pa = perturbed(h)
        qb, pb = perturbed(-h)
        fd = (arm_fk(qa, pa, model)[0] - arm_fk(qb, pb, model)[0]) / (2 * h)
        denom = max(1.0, float(np.linalg.norm(vel)))
        assert np.linalg.norm(fd - vel) / denom < 1e-6


def test_arm_fk_head_speed_band_at_contact():
    planner = StrokePlanner()
    rates = np.array([YAW_V, SH_V, EL_V])
    for z in (0.8, 1.0, 1.29, 1.5):
        elev = planner.contact_elevation(z)
        pose = static_pose(heading=-math.pi / 2)
        _, _, vel = arm_fk([0.0, elev, 0.0], pose, planner.model, rates)
        assert 8.5 <= np.linalg.norm(vel) <= 11.5
    elev = planner.contact_elevation(1.29)
    _, _, vel = arm_fk([0.0, elev, 0.0], static_pose(heading=-math.pi / 2),
                       planner.model, rates)
    assert abs(np.linalg.norm(vel) - 10.0) < 0.01


def test_arm_model_validation():
    with pytest.raises(ValueError):
        ArmModel(l_fore=0.0)
    with pytest.raises(ValueError):
        ArmModel(fixed_joints={"shoulder_roll": 4.0, "wrist_pitch": 0.0,
                               "wrist_roll": 0.0, "wrist_yaw": 0.0})


# ----------------------------------------------------------------- planning

def test_plan_stroke_feasible_mid_height():
    plan = StrokePlanner().plan_stroke(intercept_at(z=1.3))
    assert plan.contact[0] == 0.0 and plan.contact[2] == 0.0
    assert 0.5 < plan.t_to_contact < 0.65
    assert abs(plan.t_to_contact - 0.5756673434) < 1e-9
    assert np.allclose(plan.start_delays, [0.0, 0.2028378764, 0.2863216501],
                       atol=1e-9)
    assert np.allclose(plan.end - plan.start, SWING_SPAN)


def test_plan_stroke_contact_simultaneity_and_rates():
    plan = StrokePlanner().plan_stroke(intercept_at(z=1.1))
    tc = plan.t_to_contact
    assert np.abs(plan.joint_positions(tc) - plan.contact).max() < 1e-9
    assert np.allclose(plan.joint_rates(tc), [YAW_V, SH_V, EL_V], atol=1e-12)
    # contact offsets agree across joints to well under a microsecond
    for prof, delay in zip(plan.profiles, plan.start_delays):
        assert abs(delay + prof.t_contact - tc) < 1e-6


def test_plan_stroke_profile_caps_at_1ms():
    plan = StrokePlanner().plan_stroke(intercept_at(z=1.45))
    ts = np.arange(0.0, plan.t_total + 1e-9, 0.001)
    rates = np.array([plan.joint_rates(t) for t in ts])
    vmax = np.array([YAW_V, SH_V, EL_V])
    amax = np.array([YAW_A, SH_A, EL_A])
    assert (np.abs(rates) <= vmax + 1e-9).all()
    accel = np.abs(np.diff(rates, axis=0)) / 0.001
    assert (accel <= amax + 1e-6).all()


def test_plan_stroke_below_min_height():
    with pytest.raises(InfeasibleStrokeError) as exc:
        StrokePlanner().plan_stroke(intercept_at(z=0.1))
    assert exc.value.reason == "below_min_height"


def test_plan_stroke_above_max_reach():
    with pytest.raises(InfeasibleStrokeError) as exc:
        StrokePlanner().plan_stroke(intercept_at(z=2.5))
    assert exc.value.reason == "above_max_reach"


def test_plan_stroke_joint_limit_violation():
    model = ArmModel()
    tight = tuple(
        type(lim)(lim.q_min, 0.5, lim.v_max, lim.a_max)
        for lim in model.joint_limits)
    planner = StrokePlanner(model=ArmModel(joint_limits=tight))
    with pytest.raises(InfeasibleStrokeError) as exc:
        planner.plan_stroke(intercept_at(z=1.3))
    assert exc.value.reason == "outside_joint_limits"


def test_plan_stroke_rejects_invalid_prediction():
    with pytest.raises(ValueError):
        StrokePlanner().plan_stroke(InterceptPrediction.none(4.5))


def test_plan_places_chair_so_head_meets_ball():
    planner = StrokePlanner(court=standard_court())
    ip = intercept_at(y=-1.0, z=1.29)
    plan = planner.plan(ip, static_pose(x=1.0))
    pose = WheelchairState(x=plan.base_target[0], y=plan.base_target[1],
                           heading=plan.base_target[2])
    head, _, _ = arm_fk(plan.stroke.contact, pose, planner.model)
    assert np.abs(head - ip.point).max() < 1e-12
    assert plan.base_target[2] == -math.pi / 2
    assert abs(plan.trigger_time
               - (ip.t_cross - plan.stroke.t_to_contact)) < 1e-12


def test_plan_at_current_reach_keeps_pose():
    planner = StrokePlanner(court=standard_court())
    ip = intercept_at(y=-1.0, z=1.29)
    ref = planner.plan(ip, static_pose())
    chair = WheelchairState(x=ref.base_target[0], y=ref.base_target[1],
                            heading=ref.base_target[2])
    plan = planner.plan(ip, chair)
    assert np.allclose(plan.base_target,
                       [chair.x, chair.y, chair.heading], atol=1e-12)


def test_plan_y_translation_equivariance():
    planner = StrokePlanner(court=standard_court())
    base = planner.plan(intercept_at(y=-1.0), static_pose())
    shifted = planner.plan(intercept_at(y=-0.95), static_pose())
    assert abs((shifted.base_target[1] - base.base_target[1]) - 0.05) < 1e-12
    assert shifted.base_target[0] == base.base_target[0]
    assert shifted.base_target[2] == base.base_target[2]


def test_plan_updates_trigger_with_crossing_time():
    planner = StrokePlanner(court=standard_court())
    early = planner.plan(intercept_at(t_cross=2.0), static_pose())
    late = planner.plan(intercept_at(t_cross=2.3), static_pose())
    assert abs((late.trigger_time - early.trigger_time) - 0.3) < 1e-12


def test_plan_rejects_target_past_net():
    planner = StrokePlanner(court=standard_court())
    with pytest.raises(InfeasibleStrokeError) as exc:
        planner.plan(intercept_at(x=12.5), static_pose())
    assert exc.value.reason == "behind_net"


def test_plan_rejects_far_lateral_target():
    planner = StrokePlanner(court=standard_court())
    with pytest.raises(InfeasibleStrokeError) as exc:
        planner.plan(intercept_at(y=8.0), static_pose())
    assert exc.value.reason == "outside_lateral_workspace"


def test_replan_gate_boundaries():
    assert replan_gate(0.0, 10.0) is Gate.REPLAN
    assert replan_gate(10.0, 10.0) is Gate.LOCKED
    assert replan_gate(9.95, 10.0) is Gate.LOCKED
    assert replan_gate(9.9499999, 10.0) is Gate.REPLAN


def test_swing_reproduces_reference_velocity_series():
    # fixed velocity checkpoints of the default swing, absolute time from
    # trigger: yaw ramps alone first, shoulder joins at 0.2028, elbow at
    # 0.2863, all peak together at contact
    plan = StrokePlanner().plan_stroke(intercept_at(z=1.3))
    checks = [
        (0.202837876, 0, 1.38335431591587),
        (0.28632165, 0, 1.95271365372996),
        (0.28632165, 1, 0.960063399539873),
        (0.525867017, 0, 3.58641305913789),
        (0.525867017, 1, 3.71483512420134),
        (0.525867017, 2, 5.15022539828014),
        (0.575667343, 0, 3.9),
        (0.575667343, 1, 3.71483512420134),
        (0.575667343, 2, 6.22093240599832),
        (0.625467669, 2, 5.15022539828014),
        (0.865013037, 2, 0.0),
        (0.948496811, 1, 0.0),
        (1.151334687, 0, 0.0),
    ]
    for t, joint, v in checks:
        assert abs(plan.joint_rates(t)[joint] - v) < 1e-6, (t, joint)


def test_stroke_csv_export(tmp_path):
    plan = StrokePlanner().plan_stroke(intercept_at(z=1.3))
    path = tmp_path / "stroke.csv"
    write_stroke_csv(plan, path)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert rows.shape == (int(round(plan.t_total / 0.001)) + 1, 7)
    k = 400
    assert np.allclose(rows[k, 1:4], plan.joint_positions(rows[k, 0]))
    assert np.allclose(rows[k, 4:7], plan.joint_rates(rows[k, 0]))
    header = path.read_text().splitlines()[0]
    assert header.split(",")[0] == "t" and len(header.split(",")) == 7


# ------------------------------------------------------------ racket impact

def test_racket_impact_elastic_mirror():
    out = racket_impact([-5.0, 0.0, 0.0], np.zeros(3), [1.0, 0.0, 0.0],
                        e_r=1.0)
    assert np.allclose(out, [5.0, 0.0, 0.0])


def test_racket_impact_zero_restitution_keeps_tangential():
    out = racket_impact([-5.0, 2.0, 1.0], np.zeros(3), [1.0, 0.0, 0.0],
                        e_r=0.0)
    assert np.allclose(out, [0.0, 2.0, 1.0])


def test_racket_impact_normal_speed_relation():
    rng = np.random.default_rng(5)
    for _ in range(50):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        vr = rng.normal(size=3)
        rel_n = -abs(rng.normal()) - 0.1
        vb = vr + rel_n * n + np.cross(n, rng.normal(size=3))
        e = rng.uniform(0.0, 1.0)
        out = racket_impact(vb, vr, n, e_r=e)
        assert abs(float(out @ n) - (e * abs(rel_n) + float(vr @ n))) < 1e-12
        # tangential part of the relative velocity is untouched
        rel_out = out - vr
        rel_in = vb - vr
        assert np.allclose(rel_out - float(rel_out @ n) * n,
                           rel_in - float(rel_in @ n) * n)


def test_racket_impact_receding_ball_raises():
    with pytest.raises(NoContactError):
        racket_impact([5.0, 0.0, 0.0], np.zeros(3), [1.0, 0.0, 0.0])


def test_racket_impact_moving_racket_adds_speed():
    # racket swinging at the ball increases the outgoing speed
    out = racket_impact([-5.0, 0.0, 0.0], [10.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                        e_r=0.85)
    assert out[0] > 5.0
    assert abs(out[0] - (10.0 + 0.85 * 15.0)) < 1e-12
