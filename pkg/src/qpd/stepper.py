"""Per-trajectory Dormand-Prince 5(4) integrator with dense output and events.

Plain numpy source; :func:`qpd._jit.compiled` turns it into numba kernels.
The state vector always has six slots ``(x, y, z, vx, vy, vz)``; 1D models
leave the unused axes at zero and ``dim`` restricts the error norm.
"""

import numpy as np

from .fields import CENTRAL, RADIAL, acceleration, amplitude, packet_scale, velocity

try:
    from numba import prange
except ImportError:  # pragma: no cover
    prange = range

KERNELS = ("deriv", "dense", "monitor", "locate", "hinit", "integrate", "run_batch")
PARALLEL_KERNELS = ("run_batch",)

QPD = 0
DBB = 1

EV_ESCAPED = 1
EV_NODE = 2
EV_CENTER = 3
EV_FAILURE = 4
EV_COMPLETED = 5

MAX_EVENTS = 4

# Dormand-Prince tableau
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = 9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0
A71, A73, A74, A75, A76 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
E1, E3, E4, E5, E6, E7 = 71.0 / 57600.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0
D1 = -12715105075.0 / 11282082432.0
D3 = 87487479700.0 / 32700410799.0
D4 = -10690763975.0 / 1880347072.0
D5 = 701980252875.0 / 199316789632.0
D6 = -1453857185.0 / 822651844.0
D7 = 69997945.0 / 29380423.0

SAFE = 0.9
FACC1 = 5.0
FACC2 = 0.1
BETA = 0.04
EXPO1 = 0.2 - 0.75 * BETA


def deriv(kind, p, ex, cf, mode, t, y, out):
    if mode == QPD:
        ax, ay, az = acceleration(kind, p, ex, cf, y[0], y[1], y[2], t)
        out[0] = y[3]
        out[1] = y[4]
        out[2] = y[5]
        out[3] = ax
        out[4] = ay
        out[5] = az
    else:
        ux, uy, uz = velocity(kind, p, ex, cf, y[0], y[1], y[2], t)
        out[0] = ux
        out[1] = uy
        out[2] = uz
        out[3] = 0.0
        out[4] = 0.0
        out[5] = 0.0


def dense(rc, theta, out):
    th1 = 1.0 - theta
    for i in range(6):
        out[i] = rc[0, i] + theta * (rc[1, i] + th1 * (rc[2, i] + theta * (rc[3, i] + th1 * rc[4, i])))


def monitor(code, kind, p, ex, cf, dim, scaled, t, y):
    """Scalar whose sign change marks an event: 1 escape ratio, 2 amplitude, 3 radius."""
    if code == 2:
        return amplitude(kind, p, ex, cf, y[0], y[1], y[2], t)
    rr = 0.0
    for i in range(dim):
        rr += y[i] * y[i]
    rr = np.sqrt(rr)
    if code == 1 and scaled:
        return rr / packet_scale(kind, p, t)
    return rr


def locate(code, level, kind, p, ex, cf, dim, scaled, rc, t, h, buf):
    """Bisect the dense interpolant for monitor == level within the step."""
    dense(rc, 0.0, buf)
    f_lo = monitor(code, kind, p, ex, cf, dim, scaled, t, buf) - level
    lo = 0.0
    hi = 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        dense(rc, mid, buf)
        f_mid = monitor(code, kind, p, ex, cf, dim, scaled, t + mid * h, buf) - level
        if (f_mid > 0.0) == (f_lo > 0.0):
            lo = mid
            f_lo = f_mid
        else:
            hi = mid
    return hi


def hinit(kind, p, ex, cf, mode, nact, idx, t, y, f0, rtol, atol, max_step, tmp, f1):
    d0 = 0.0
    d1 = 0.0
    for j in range(nact):
        i = idx[j]
        sk = atol + rtol * abs(y[i])
        d0 += (y[i] / sk) ** 2
        d1 += (f0[i] / sk) ** 2
    d0 = np.sqrt(d0 / nact)
    d1 = np.sqrt(d1 / nact)
    # scaled norms below 1e-5 make the ratio guess meaningless
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, max_step)
    for i in range(6):
        tmp[i] = y[i] + h0 * f0[i]
    deriv(kind, p, ex, cf, mode, t + h0, tmp, f1)
    d2 = 0.0
    for j in range(nact):
        i = idx[j]
        sk = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f0[i]) / sk) ** 2
    d2 = np.sqrt(d2 / nact) / h0
    dm = max(d1, d2)
    if dm <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / dm) ** 0.2
    return min(100.0 * h0, h1, max_step)


def integrate(kind, p, ex, cf, mode, dim, y0, t0, t_end, ts, rtol, atol, max_step, h_init,
              escape_radius, scaled, stop_on_escape, node_tol, center_radius, max_steps, out, events):
    """Integrate one trajectory; fill ``out`` at ``ts`` and ``events`` rows (code, t, state).

    Returns ``(n_out, n_events, n_accepted, n_rejected)``.
    """
    nact = dim if mode == DBB else 2 * dim
    idx = np.empty(nact, dtype=np.int64)
    for j in range(dim):
        idx[j] = j
        if mode == QPD:
            idx[dim + j] = 3 + j
    y = np.empty(6)
    y1 = np.empty(6)
    tmp = np.empty(6)
    buf = np.empty(6)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    k5 = np.empty(6)
    k6 = np.empty(6)
    k7 = np.empty(6)
    rc = np.empty((5, 6))
    for i in range(6):
        y[i] = y0[i]
    ns = ts.shape[0]
    iout = 0
    nev = 0
    t = t0
    while iout < ns and ts[iout] <= t0:
        for i in range(6):
            out[iout, i] = y[i]
        iout += 1

    deriv(kind, p, ex, cf, mode, t, y, k1)
    check_center = kind == CENTRAL or kind == RADIAL
    check_escape = escape_radius > 0.0
    amp_scale = p[8]
    amp_old = monitor(2, kind, p, ex, cf, dim, scaled, t, y)
    q_old = monitor(1, kind, p, ex, cf, dim, scaled, t, y)
    escaped = False
    if check_escape and q_old > escape_radius:
        outward = 0.0
        for i in range(dim):
            outward += y[i] * (y[3 + i] if mode == QPD else k1[i])
        if outward > 0.0:
            escaped = True
            events[nev, 0] = EV_ESCAPED
            events[nev, 1] = t
            for i in range(6):
                events[nev, 2 + i] = y[i]
            nev += 1
            if stop_on_escape:
                return iout, nev, 0, 0

    if h_init > 0.0:
        h = min(h_init, max_step)
    else:
        h = hinit(kind, p, ex, cf, mode, nact, idx, t, y, k1, rtol, atol, max_step, tmp, k2)
        # never start below the underflow floor; error control shrinks a bad guess
        h = min(max(h, 1e-12 * max(1.0, abs(t))), max_step)
    facold = 1e-4
    reject = False
    naccept = 0
    nreject = 0
    while True:
        if naccept + nreject >= max_steps or h < 1e-14 * max(1.0, abs(t)):
            events[nev, 0] = EV_FAILURE
            events[nev, 1] = t
            for i in range(6):
                events[nev, 2 + i] = y[i]
            nev += 1
            break
        last = False
        if t + 1.01 * h >= t_end:
            h = t_end - t
            last = True

        for i in range(6):
            tmp[i] = y[i] + h * A21 * k1[i]
        deriv(kind, p, ex, cf, mode, t + C2 * h, tmp, k2)
        for i in range(6):
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        deriv(kind, p, ex, cf, mode, t + C3 * h, tmp, k3)
        for i in range(6):
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        deriv(kind, p, ex, cf, mode, t + C4 * h, tmp, k4)
        for i in range(6):
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        deriv(kind, p, ex, cf, mode, t + C5 * h, tmp, k5)
        for i in range(6):
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        deriv(kind, p, ex, cf, mode, t + h, tmp, k6)
        for i in range(6):
            y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i])
        deriv(kind, p, ex, cf, mode, t + h, y1, k7)

        err = 0.0
        for j in range(nact):
            i = idx[j]
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            sk = atol + rtol * max(abs(y[i]), abs(y1[i]))
            err += (e / sk) ** 2
        err = np.sqrt(err / nact)
        if not np.isfinite(err):
            h *= 0.25
            reject = True
            nreject += 1
            continue

        fac11 = err ** EXPO1
        fac = fac11 / facold ** BETA
        fac = max(FACC2, min(FACC1, fac / SAFE))
        hnew = h / fac

        if err > 1.0:
            h = h / min(FACC1, fac11 / SAFE)
            reject = True
            nreject += 1
            continue

        naccept += 1
        facold = max(err, 1e-4)
        for i in range(6):
            rc[0, i] = y[i]
            rc[1, i] = y1[i] - y[i]
            rc[2, i] = h * k1[i] - rc[1, i]
            rc[3, i] = rc[1, i] - h * k7[i] - rc[2, i]
            rc[4, i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
        t_new = t + h

        stop_code = 0
        stop_theta = 1.0
        amp_new = monitor(2, kind, p, ex, cf, dim, scaled, t_new, y1)
        if amp_new * amp_old < 0.0:
            stop_code = EV_NODE
            stop_theta = locate(2, 0.0, kind, p, ex, cf, dim, scaled, rc, t, h, buf)
        elif abs(amp_new) < node_tol * amp_scale:
            stop_code = EV_NODE
        if check_center:
            r_new = monitor(3, kind, p, ex, cf, dim, scaled, t_new, y1)
            if r_new < center_radius * p[9]:
                th = locate(3, center_radius * p[9], kind, p, ex, cf, dim, scaled, rc, t, h, buf)
                if stop_code == 0 or th < stop_theta:
                    stop_code = EV_CENTER
                    stop_theta = th
        esc_theta = 2.0
        if check_escape and not escaped:
            q_new = monitor(1, kind, p, ex, cf, dim, scaled, t_new, y1)
            if q_new > escape_radius and q_old <= escape_radius:
                esc_theta = locate(1, escape_radius, kind, p, ex, cf, dim, scaled, rc, t, h, buf)
            q_old = q_new
        if esc_theta <= 1.0 and (stop_code == 0 or esc_theta <= stop_theta):
            escaped = True
            dense(rc, esc_theta, buf)
            events[nev, 0] = EV_ESCAPED
            events[nev, 1] = t + esc_theta * h
            for i in range(6):
                events[nev, 2 + i] = buf[i]
            nev += 1
            if stop_on_escape:
                stop_code = EV_ESCAPED
                stop_theta = esc_theta

        t_stop = t_new if stop_code == 0 else t + stop_theta * h
        while iout < ns and ts[iout] <= t_stop:
            dense(rc, (ts[iout] - t) / h, buf)
            for i in range(6):
                out[iout, i] = buf[i]
            iout += 1

        if stop_code != 0:
            if stop_code != EV_ESCAPED:
                dense(rc, stop_theta, buf)
                events[nev, 0] = stop_code
                events[nev, 1] = t_stop
                for i in range(6):
                    events[nev, 2 + i] = buf[i]
                nev += 1
            break

        for i in range(6):
            y[i] = y1[i]
            k1[i] = k7[i]
        t = t_new
        amp_old = amp_new
        if last:
            events[nev, 0] = EV_COMPLETED
            events[nev, 1] = t
            for i in range(6):
                events[nev, 2 + i] = y[i]
            nev += 1
            break
        if hnew > max_step:
            hnew = max_step
        if reject:
            hnew = min(hnew, h)
        reject = False
        h = hnew
    return iout, nev, naccept, nreject


def run_batch(kind, p, ex, cf, mode, dim, Y0, T0, t_end, ts, rtol, atol, max_step, h_init,
              escape_radius, scaled, stop_on_escape, node_tol, center_radius, max_steps, OUT, EV, COUNTS):
    for n in prange(Y0.shape[0]):
        a, b, c, d = integrate(kind, p, ex, cf, mode, dim, Y0[n], T0[n], t_end, ts, rtol, atol, max_step,
                               h_init, escape_radius, scaled, stop_on_escape, node_tol, center_radius,
                               max_steps, OUT[n], EV[n])
        COUNTS[n, 0] = a
        COUNTS[n, 1] = b
        COUNTS[n, 2] = c
        COUNTS[n, 3] = d
