"""Jitted numerical kernels shared by the flight model, tracker, and predictor.

Everything that steps ball state lives here so that the simulator's truth
integration, the filter's mean propagation, and the interception rollout are
literally the same arithmetic. All kernels use fastmath=False IEEE semantics;
results are bit-reproducible for identical inputs.

State layout: 1D float64 array [px, py, pz, vx, vy, vz]. Physics parameters
travel as a 1D float64 array [g, k_drag, ball_radius, restitution,
horizontal_retention] built by dynamics.param_vector.
"""
from __future__ import annotations

import numpy as np
from numba import njit

BOUNCE_BISECT_TOL = 1.0e-6  # seconds

# indices into the parameter vector
P_G = 0
P_KDRAG = 1
P_RADIUS = 2
P_REST = 3
P_KHORIZ = 4


@njit(cache=True)
def flight_accel(vx, vy, vz, g, k):
    """Acceleration under gravity and quadratic drag, -g z - k |v| v."""
    sp = (vx * vx + vy * vy + vz * vz) ** 0.5
    return -k * sp * vx, -k * sp * vy, -g - k * sp * vz


@njit(cache=True)
def rk4_free(px, py, pz, vx, vy, vz, dt, g, k):
    """One classical RK4 step of the flight ODE, ignoring the floor."""
    ax1, ay1, az1 = flight_accel(vx, vy, vz, g, k)
    # k2 at midpoint
    vx2 = vx + 0.5 * dt * ax1
    vy2 = vy + 0.5 * dt * ay1
    vz2 = vz + 0.5 * dt * az1
    ax2, ay2, az2 = flight_accel(vx2, vy2, vz2, g, k)
    vx3 = vx + 0.5 * dt * ax2
    vy3 = vy + 0.5 * dt * ay2
    vz3 = vz + 0.5 * dt * az2
    ax3, ay3, az3 = flight_accel(vx3, vy3, vz3, g, k)
    vx4 = vx + dt * ax3
    vy4 = vy + dt * ay3
    vz4 = vz + dt * az3
    ax4, ay4, az4 = flight_accel(vx4, vy4, vz4, g, k)

    npx = px + dt / 6.0 * (vx + 2.0 * vx2 + 2.0 * vx3 + vx4)
    npy = py + dt / 6.0 * (vy + 2.0 * vy2 + 2.0 * vy3 + vy4)
    npz = pz + dt / 6.0 * (vz + 2.0 * vz2 + 2.0 * vz3 + vz4)
    nvx = vx + dt / 6.0 * (ax1 + 2.0 * ax2 + 2.0 * ax3 + ax4)
    nvy = vy + dt / 6.0 * (ay1 + 2.0 * ay2 + 2.0 * ay3 + ay4)
    nvz = vz + dt / 6.0 * (az1 + 2.0 * az2 + 2.0 * az3 + az4)
    return npx, npy, npz, nvx, nvy, nvz


@njit(cache=True)
def z_after(px, py, pz, vx, vy, vz, h, g, k):
    r = rk4_free(px, py, pz, vx, vy, vz, h, g, k)
    return r[2]


@njit(cache=True)
def flight_step(px, py, pz, vx, vy, vz, dt, params):
    """One integrator step with floor-contact handling.

    If the step carries the ball center below ball_radius, the contact time is
    bisected to within BOUNCE_BISECT_TOL, the bounce map applied (vz -> -e vz,
    horizontal components scaled by the retention factor, z clamped to the
    radius), and the remainder of the step integrated. Event detection checks
    the end-of-step height only, which is exact for the sub-centimeter dips a
    millisecond step can produce; callers taking long steps through a bounce
    get the contact wherever the end state lands below the floor.

    Returns (px, py, pz, vx, vy, vz, n_bounces, t_of_first_bounce_in_step,
    bounce_px, bounce_py, bounce_pz, pre_vx, pre_vy, pre_vz, post_vx, post_vy,
    post_vz). Bounce fields are zero when n_bounces == 0; with more than one
    contact in a single step only the first is reported (the count is exact).
    """
    g = params[P_G]
    k = params[P_KDRAG]
    r_ball = params[P_RADIUS]
    e = params[P_REST]
    kh = params[P_KHORIZ]

    n_bounces = 0
    t_b = 0.0
    bpx = bpy = bpz = 0.0
    prevx = prevy = prevz = 0.0
    postvx = postvy = postvz = 0.0

    t_off = 0.0
    remaining = dt
    for _ in range(4):
        nx, ny, nz, nvx, nvy, nvz = rk4_free(px, py, pz, vx, vy, vz, remaining, g, k)
        if nz >= r_ball:
            return (nx, ny, nz, nvx, nvy, nvz, n_bounces, t_b,
                    bpx, bpy, bpz, prevx, prevy, prevz, postvx, postvy, postvz)
        # bisect contact time in (0, remaining]
        lo = 0.0
        hi = remaining
        while hi - lo > BOUNCE_BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if z_after(px, py, pz, vx, vy, vz, mid, g, k) >= r_ball:
                lo = mid
            else:
                hi = mid
        h = 0.5 * (lo + hi)
        cx, cy, cz, cvx, cvy, cvz = rk4_free(px, py, pz, vx, vy, vz, h, g, k)
        n_bounces += 1
        if n_bounces == 1:
            t_b = t_off + h
            bpx, bpy, bpz = cx, cy, r_ball
            prevx, prevy, prevz = cvx, cvy, cvz
        px, py, pz = cx, cy, r_ball
        vx, vy = kh * cvx, kh * cvy
        vz = -e * cvz
        if n_bounces == 1:
            postvx, postvy, postvz = vx, vy, vz
        t_off += h
        remaining -= h
        if remaining <= 0.0:
            break
    return (px, py, pz, vx, vy, vz, n_bounces, t_b,
            bpx, bpy, bpz, prevx, prevy, prevz, postvx, postvy, postvz)


@njit(cache=True)
def drag_jac(vx, vy, vz, k):
    """d/dv of the drag acceleration -k |v| v, a 3x3 array."""
    D = np.zeros((3, 3))
    sp = (vx * vx + vy * vy + vz * vz) ** 0.5
    if sp < 1.0e-12:
        return D
    D[0, 0] = -k * (sp + vx * vx / sp)
    D[0, 1] = -k * (vx * vy / sp)
    D[0, 2] = -k * (vx * vz / sp)
    D[1, 0] = D[0, 1]
    D[1, 1] = -k * (sp + vy * vy / sp)
    D[1, 2] = -k * (vy * vz / sp)
    D[2, 0] = D[0, 2]
    D[2, 1] = D[1, 2]
    D[2, 2] = -k * (sp + vz * vz / sp)
    return D


@njit(cache=True)
def _mm3(A, B, out):
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for l in range(3):
                acc += A[i, l] * B[l, j]
            out[i, j] = acc


@njit(cache=True)
def _mm3_bt(A, B, out):
    """out = A @ B.T"""
    for i in range(3):
        for j in range(3):
            acc = 0.0
            for l in range(3):
                acc += A[i, l] * B[j, l]
            out[i, j] = acc


@njit(cache=True)
def _cov_advance(P, vx, vy, vz, dt, k, q, W):
    """Propagate a 6x6 covariance one substep of length dt, in place.

    Transition blocks for state (p, v) with dv/dv = D (drag Jacobian):
    Phi = [[I, B], [0, C]], B = dt I + dt^2/2 D, C = I + dt D + dt^2/2 D^2,
    exact when drag is off (D = 0). Process noise is the white-acceleration
    integral [[q dt^3/3 I, q dt^2/2 I], [q dt^2/2 I, q dt I]].

    W is a (8, 3, 3) scratch array owned by the caller so the inner loop
    allocates nothing.
    """
    D = W[0]
    B = W[1]
    C = W[2]
    X = W[3]
    Y = W[4]
    O_pp = W[5]
    O_pv = W[6]
    O_vv = W[7]

    sp = (vx * vx + vy * vy + vz * vz) ** 0.5
    if sp < 1.0e-12:
        for i in range(3):
            for j in range(3):
                D[i, j] = 0.0
    else:
        D[0, 0] = -k * (sp + vx * vx / sp)
        D[0, 1] = -k * (vx * vy / sp)
        D[0, 2] = -k * (vx * vz / sp)
        D[1, 0] = D[0, 1]
        D[1, 1] = -k * (sp + vy * vy / sp)
        D[1, 2] = -k * (vy * vz / sp)
        D[2, 0] = D[0, 2]
        D[2, 1] = D[1, 2]
        D[2, 2] = -k * (sp + vz * vz / sp)

    half = 0.5 * dt * dt
    for i in range(3):
        for j in range(3):
            dd = 0.0
            for l in range(3):
                dd += D[i, l] * D[l, j]
            B[i, j] = half * D[i, j]
            C[i, j] = dt * D[i, j] + half * dd
        B[i, i] += dt
        C[i, i] += 1.0

    Ppp = P[:3, :3]
    Ppv = P[:3, 3:]
    Pvv = P[3:, 3:]

    # O_pp = Ppp + B Pvp + (B Pvp)^T + B Pvv B^T
    _mm3_bt(B, Ppv, Y)          # Y = B @ Ppv.T = B @ Pvp
    _mm3(B, Pvv, X)             # X = B @ Pvv
    _mm3_bt(X, B, O_pp)         # O_pp = B Pvv B^T
    for i in range(3):
        for j in range(3):
            O_pp[i, j] += Ppp[i, j] + Y[i, j] + Y[j, i]
            X[i, j] += Ppv[i, j]    # X = Ppv + B Pvv
    _mm3_bt(X, C, O_pv)         # O_pv = (Ppv + B Pvv) C^T
    _mm3(C, Pvv, Y)
    _mm3_bt(Y, C, O_vv)         # O_vv = C Pvv C^T

    q3 = q * dt * dt * dt / 3.0
    q2 = q * dt * dt / 2.0
    q1 = q * dt
    for i in range(3):
        for j in range(3):
            P[i, j] = O_pp[i, j]
            P[i, j + 3] = O_pv[i, j]
            P[j + 3, i] = O_pv[i, j]
            P[i + 3, j + 3] = O_vv[i, j]
        P[i, i] += q3
        P[i, i + 3] += q2
        P[i + 3, i] += q2
        P[i + 3, i + 3] += q1
    # enforce symmetry against roundoff
    for i in range(6):
        for j in range(i + 1, 6):
            s = 0.5 * (P[i, j] + P[j, i])
            P[i, j] = s
            P[j, i] = s


@njit(cache=True)
def _bounce_cov(P, e, kh, bounce_noise):
    """Map covariance through the bounce, in place: velocity block by
    diag(kh, kh, -e), then inflate the velocity diagonal by bounce_noise^2."""
    m0 = kh
    m1 = kh
    m2 = -e
    for i in range(3):
        P[i, 3] = P[i, 3] * m0
        P[i, 4] = P[i, 4] * m1
        P[i, 5] = P[i, 5] * m2
        P[3, i] = P[i, 3]
        P[4, i] = P[i, 4]
        P[5, i] = P[i, 5]
    p33 = P[3, 3] * m0 * m0
    p34 = P[3, 4] * m0 * m1
    p35 = P[3, 5] * m0 * m2
    p44 = P[4, 4] * m1 * m1
    p45 = P[4, 5] * m1 * m2
    p55 = P[5, 5] * m2 * m2
    b2 = bounce_noise * bounce_noise
    P[3, 3] = p33 + b2
    P[3, 4] = p34
    P[4, 3] = p34
    P[3, 5] = p35
    P[5, 3] = p35
    P[4, 4] = p44 + b2
    P[4, 5] = p45
    P[5, 4] = p45
    P[5, 5] = p55 + b2


@njit(cache=True)
def ekf_predict(mean, P, t, target_t, dt_sub, params, q, bounce_noise):
    """Propagate mean and covariance from t to target_t.

    The mean runs through flight_step in substeps of dt_sub (plus a final
    remainder), the covariance through the linearized transition evaluated at
    the pre-substep velocity. A bounce inside a substep applies the bounce
    covariance map after that substep's propagation.

    Returns (mean6, P, n_bounces).
    """
    m = mean.copy()
    Pc = P.copy()
    W = np.empty((8, 3, 3))
    n_bounces = 0
    remaining = target_t - t
    while remaining > 1.0e-12:
        h = dt_sub if remaining > dt_sub else remaining
        _cov_advance(Pc, m[3], m[4], m[5], h, params[P_KDRAG], q, W)
        r = flight_step(m[0], m[1], m[2], m[3], m[4], m[5], h, params)
        m[0], m[1], m[2], m[3], m[4], m[5] = r[0], r[1], r[2], r[3], r[4], r[5]
        nb = r[6]
        if nb > 0:
            for _ in range(nb):
                _bounce_cov(Pc, params[P_REST], params[P_KHORIZ], bounce_noise)
            n_bounces += nb
        remaining -= h
    return m, Pc, n_bounces


@njit(cache=True)
def _inv3(S):
    a, b, c = S[0, 0], S[0, 1], S[0, 2]
    d, e, f = S[1, 0], S[1, 1], S[1, 2]
    g, h, i = S[2, 0], S[2, 1], S[2, 2]
    A = e * i - f * h
    B = -(d * i - f * g)
    C = d * h - e * g
    det = a * A + b * B + c * C
    out = np.empty((3, 3))
    out[0, 0] = A / det
    out[0, 1] = -(b * i - c * h) / det
    out[0, 2] = (b * f - c * e) / det
    out[1, 0] = B / det
    out[1, 1] = (a * i - c * g) / det
    out[1, 2] = -(a * f - c * d) / det
    out[2, 0] = C / det
    out[2, 1] = -(a * h - b * g) / det
    out[2, 2] = (a * e - b * d) / det
    return out


@njit(cache=True)
def ekf_update(mean, P, z, sigma):
    """Joseph-form position update with isotropic noise sigma^2 I.

    Returns (mean6, P).
    """
    S = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            S[i, j] = P[i, j]
        S[i, i] += sigma * sigma
    Sinv = _inv3(S)
    # K = P H^T S^-1, 6x3
    K = np.zeros((6, 3))
    for i in range(6):
        for j in range(3):
            acc = 0.0
            for l in range(3):
                acc += P[i, l] * Sinv[l, j]
            K[i, j] = acc
    m = mean.copy()
    r0 = z[0] - mean[0]
    r1 = z[1] - mean[1]
    r2 = z[2] - mean[2]
    for i in range(6):
        m[i] += K[i, 0] * r0 + K[i, 1] * r1 + K[i, 2] * r2
    # A = I - K H (H = [I 0])
    A = np.zeros((6, 6))
    for i in range(6):
        A[i, i] = 1.0
        for j in range(3):
            A[i, j] -= K[i, j]
    AP = A @ P
    out = AP @ A.T
    s2 = sigma * sigma
    for i in range(6):
        for j in range(6):
            acc = 0.0
            for l in range(3):
                acc += K[i, l] * K[j, l]
            out[i, j] += s2 * acc
    for i in range(6):
        for j in range(i + 1, 6):
            s = 0.5 * (out[i, j] + out[j, i])
            out[i, j] = s
            out[j, i] = s
    return m, out


@njit(cache=True)
def ekf_chain(mean, P, t, t_caps, zs, sigmas, dt_sub, params, q, bounce_noise):
    """Run predict/update over a capture-ordered batch of measurements.

    Same arithmetic as alternating ekf_predict / ekf_update calls; used by the
    tracker's replay path so a rewind re-applies its buffer without python
    round-trips. Returns (mean6, P, t_final, n_bounces).
    """
    m = mean.copy()
    Pc = P.copy()
    tc = t
    n_bounces = 0
    for idx in range(t_caps.shape[0]):
        m, Pc, nb = ekf_predict(m, Pc, tc, t_caps[idx], dt_sub, params, q, bounce_noise)
        n_bounces += nb
        tc = t_caps[idx]
        m, Pc = ekf_update(m, Pc, zs[idx], sigmas[idx])
    return m, Pc, tc, n_bounces


@njit(cache=True)
def rollout_plane(mean, P, t, plane_x, direction, horizon, dt, params, q, bounce_noise):
    """Roll the mean and covariance forward until the mean crosses the plane
    x = plane_x moving in the given direction (+1 or -1).

    The mean steps exactly as simulate_flight does (full dt steps from the
    start state, crossing time bisected to BOUNCE_BISECT_TOL); the covariance
    tracks it with the same linearization the tracker uses. Returns
    (found, t_cross, state6_at_cross, P_at_cross, n_bounces). When the horizon
    elapses without a crossing, found is 0 and the last propagated state is
    returned.
    """
    m = mean.copy()
    Pc = P.copy()
    W = np.empty((8, 3, 3))
    n_max = int(horizon / dt) + 1
    n_bounces = 0
    t_end = 0.0
    for i in range(n_max):
        px, py, pz, vx, vy, vz = m[0], m[1], m[2], m[3], m[4], m[5]
        _cov_advance(Pc, vx, vy, vz, dt, params[P_KDRAG], q, W)
        r = flight_step(px, py, pz, vx, vy, vz, dt, params)
        nb = r[6]
        crossed = False
        if direction > 0:
            crossed = px < plane_x and r[0] >= plane_x
        else:
            crossed = px > plane_x and r[0] <= plane_x
        if crossed:
            # bisect the crossing time within this step
            lo = 0.0
            hi = dt
            while hi - lo > BOUNCE_BISECT_TOL:
                mid = 0.5 * (lo + hi)
                c = rk4_free(px, py, pz, vx, vy, vz, mid, params[P_G], params[P_KDRAG])
                beyond = (c[0] >= plane_x) if direction > 0 else (c[0] <= plane_x)
                if beyond:
                    hi = mid
                else:
                    lo = mid
            h = 0.5 * (lo + hi)
            c = rk4_free(px, py, pz, vx, vy, vz, h, params[P_G], params[P_KDRAG])
            out = np.empty(6)
            out[0] = plane_x
            out[1], out[2] = c[1], c[2]
            out[3], out[4], out[5] = c[3], c[4], c[5]
            # covariance at the enclosing substep is close enough at <= dt resolution
            return 1, t + i * dt + h, out, Pc, n_bounces
        m[0], m[1], m[2], m[3], m[4], m[5] = r[0], r[1], r[2], r[3], r[4], r[5]
        if nb > 0:
            for _ in range(nb):
                _bounce_cov(Pc, params[P_REST], params[P_KHORIZ], bounce_noise)
            n_bounces += nb
        t_end = (i + 1) * dt
        if t_end >= horizon:
            break
    return 0, t + t_end, m, Pc, n_bounces
