"""Pure-numpy fallback: Dormand-Prince 5(4) advanced over many trajectories at once.

Each lane carries its own time, step size and controller state, so the
arithmetic per lane follows :func:`qpd.stepper.integrate`; only the loop
structure differs (one numpy pass per step over all still-active lanes).
"""

import numpy as np

from . import fields
from .stepper import (
    A21, A31, A32, A41, A42, A43, A51, A52, A53, A54, A61, A62, A63, A64, A65,
    A71, A73, A74, A75, A76, BETA, C2, C3, C4, C5, D1, D3, D4, D5, D6, D7,
    DBB, E1, E3, E4, E5, E6, E7, EV_CENTER, EV_COMPLETED, EV_ESCAPED, EV_FAILURE,
    EV_NODE, EXPO1, FACC1, FACC2, MAX_EVENTS, QPD, SAFE,
)


def _deriv(kind, p, ex, cf, mode, t, y):
    out = np.zeros_like(y)
    if mode == QPD:
        out[:, :3] = y[:, 3:]
        ax, ay, az = fields.acceleration(kind, p, ex, cf, y[:, 0], y[:, 1], y[:, 2], t)
        out[:, 3], out[:, 4], out[:, 5] = ax, ay, az
    else:
        ux, uy, uz = fields.velocity(kind, p, ex, cf, y[:, 0], y[:, 1], y[:, 2], t)
        out[:, 0], out[:, 1], out[:, 2] = ux, uy, uz
    return out


def _dense(rc, theta):
    th = theta[:, None]
    return rc[:, 0] + th * (rc[:, 1] + (1.0 - th) * (rc[:, 2] + th * (rc[:, 3] + (1.0 - th) * rc[:, 4])))


def _monitor(code, kind, p, ex, cf, dim, scaled, t, y):
    if code == 2:
        return fields.amplitude(kind, p, ex, cf, y[:, 0], y[:, 1], y[:, 2], t)
    rr = np.sqrt(np.sum(y[:, :dim] ** 2, axis=1))
    if code == 1 and scaled:
        return rr / fields.packet_scale(kind, p, t)
    return rr


def _locate(code, level, kind, p, ex, cf, dim, scaled, rc, t, h):
    m = t.shape[0]
    lo = np.zeros(m)
    hi = np.ones(m)
    f_lo = _monitor(code, kind, p, ex, cf, dim, scaled, t, _dense(rc, lo)) - level
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        f_mid = _monitor(code, kind, p, ex, cf, dim, scaled, t + mid * h, _dense(rc, mid)) - level
        same = (f_mid > 0.0) == (f_lo > 0.0)
        lo = np.where(same, mid, lo)
        f_lo = np.where(same, f_mid, f_lo)
        hi = np.where(same, hi, mid)
    return hi


def _hinit(kind, p, ex, cf, mode, idx, t, y, f0, rtol, atol, max_step):
    sk = atol + rtol * np.abs(y[:, idx])
    d0 = np.sqrt(np.mean((y[:, idx] / sk) ** 2, axis=1))
    d1 = np.sqrt(np.mean((f0[:, idx] / sk) ** 2, axis=1))
    # scaled norms below 1e-5 make the ratio guess meaningless
    small = (d0 < 1e-5) | (d1 < 1e-5)
    h0 = np.where(small, 1e-6, 0.01 * d0 / np.where(small, 1.0, d1))
    h0 = np.minimum(h0, max_step)
    f1 = _deriv(kind, p, ex, cf, mode, t + h0, y + h0[:, None] * f0)
    d2 = np.sqrt(np.mean(((f1[:, idx] - f0[:, idx]) / sk) ** 2, axis=1)) / h0
    dm = np.maximum(d1, d2)
    h1 = np.where(dm <= 1e-15, np.maximum(1e-6, h0 * 1e-3), (0.01 / np.where(dm <= 1e-15, 1.0, dm)) ** 0.2)
    return np.minimum(np.minimum(100.0 * h0, h1), max_step)


def integrate_lanes(kind, p, ex, cf, mode, dim, Y0, T0, t_end, ts, rtol, atol, max_step, h_init,
                    escape_radius, scaled, stop_on_escape, node_tol, center_radius, max_steps):
    """Vectorized counterpart of :func:`qpd.stepper.run_batch`; returns (OUT, EV, COUNTS)."""
    Y0 = np.asarray(Y0, dtype=float)
    N = Y0.shape[0]
    ns = ts.shape[0]
    idx = np.arange(dim) if mode == DBB else np.concatenate([np.arange(dim), 3 + np.arange(dim)])
    OUT = np.full((N, ns, 6), np.nan)
    EV = np.zeros((N, MAX_EVENTS, 8))
    COUNTS = np.zeros((N, 4), dtype=np.int64)
    nev = COUNTS[:, 1]
    iout = COUNTS[:, 0]

    def record(lanes, code, t, y):
        slot = nev[lanes]
        EV[lanes, slot, 0] = code
        EV[lanes, slot, 1] = t
        EV[lanes, slot, 2:] = y
        nev[lanes] += 1

    Y = Y0.copy()
    T = np.asarray(T0, dtype=float).copy()
    iout[:] = np.searchsorted(ts, T, side="right")
    for k in range(ns):
        sel = ts[k] <= T
        OUT[sel, k] = Y[sel]
    K1 = _deriv(kind, p, ex, cf, mode, T, Y)
    active = np.ones(N, dtype=bool)
    escaped = np.zeros(N, dtype=bool)
    check_center = kind in (fields.CENTRAL, fields.RADIAL)
    check_escape = escape_radius > 0.0
    amp_old = _monitor(2, kind, p, ex, cf, dim, scaled, T, Y)
    q_old = _monitor(1, kind, p, ex, cf, dim, scaled, T, Y)
    if check_escape:
        vel = Y[:, 3:3 + dim] if mode == QPD else K1[:, :dim]
        outward = np.sum(Y[:, :dim] * vel, axis=1) > 0.0
        start = np.flatnonzero((q_old > escape_radius) & outward)
        if start.size:
            escaped[start] = True
            record(start, EV_ESCAPED, T[start], Y[start])
            if stop_on_escape:
                active[start] = False
    if h_init > 0.0:
        H = np.full(N, min(h_init, max_step))
    else:
        H = _hinit(kind, p, ex, cf, mode, idx, T, Y, K1, rtol, atol, max_step)
        H = np.minimum(np.maximum(H, 1e-12 * np.maximum(1.0, np.abs(T))), max_step)
    facold = np.full(N, 1e-4)
    reject = np.zeros(N, dtype=bool)
    nacc = COUNTS[:, 2]
    nrej = COUNTS[:, 3]

    while active.any():
        a = np.flatnonzero(active)
        fail = (nacc[a] + nrej[a] >= max_steps) | (H[a] < 1e-14 * np.maximum(1.0, np.abs(T[a])))
        if fail.any():
            lanes = a[fail]
            record(lanes, EV_FAILURE, T[lanes], Y[lanes])
            active[lanes] = False
            a = a[~fail]
            if a.size == 0:
                break
        t = T[a]
        y = Y[a]
        k1 = K1[a]
        h = H[a]
        last = t + 1.01 * h >= t_end
        h = np.where(last, t_end - t, h)
        hc = h[:, None]

        k2 = _deriv(kind, p, ex, cf, mode, t + C2 * h, y + hc * A21 * k1)
        k3 = _deriv(kind, p, ex, cf, mode, t + C3 * h, y + hc * (A31 * k1 + A32 * k2))
        k4 = _deriv(kind, p, ex, cf, mode, t + C4 * h, y + hc * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = _deriv(kind, p, ex, cf, mode, t + C5 * h, y + hc * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = _deriv(kind, p, ex, cf, mode, t + h,
                    y + hc * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        y1 = y + hc * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6)
        k7 = _deriv(kind, p, ex, cf, mode, t + h, y1)

        e = hc * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sk = atol + rtol * np.maximum(np.abs(y[:, idx]), np.abs(y1[:, idx]))
        with np.errstate(invalid="ignore", over="ignore"):
            err = np.sqrt(np.mean((e[:, idx] / sk) ** 2, axis=1))
        finite = np.isfinite(err)

        bad = a[~finite]
        H[bad] = h[~finite] * 0.25
        reject[bad] = True
        nrej[bad] += 1

        errf = np.where(finite, err, 0.0)
        fac11 = errf ** EXPO1
        fac = np.maximum(FACC2, np.minimum(FACC1, fac11 / facold[a] ** BETA / SAFE))
        hnew = h / fac

        rej = finite & (errf > 1.0)
        rl = a[rej]
        H[rl] = h[rej] / np.minimum(FACC1, fac11[rej] / SAFE)
        reject[rl] = True
        nrej[rl] += 1

        ok = finite & (errf <= 1.0)
        if not ok.any():
            continue
        lanes = a[ok]
        nacc[lanes] += 1
        facold[lanes] = np.maximum(errf[ok], 1e-4)
        t, h, y, y1, k1, k7 = t[ok], h[ok], y[ok], y1[ok], k1[ok], k7[ok]
        k3, k4, k5, k6 = k3[ok], k4[ok], k5[ok], k6[ok]
        hnew, last = hnew[ok], last[ok]
        hc = h[:, None]
        rc = np.empty((lanes.size, 5, 6))
        rc[:, 0] = y
        rc[:, 1] = y1 - y
        rc[:, 2] = hc * k1 - rc[:, 1]
        rc[:, 3] = rc[:, 1] - hc * k7 - rc[:, 2]
        rc[:, 4] = hc * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7)
        t_new = t + h

        stop_code = np.zeros(lanes.size, dtype=np.int64)
        stop_theta = np.ones(lanes.size)
        amp_new = _monitor(2, kind, p, ex, cf, dim, scaled, t_new, y1)
        cross = amp_new * amp_old[lanes] < 0.0
        if cross.any():
            stop_code[cross] = EV_NODE
            stop_theta[cross] = _locate(2, 0.0, kind, p, ex, cf, dim, scaled, rc[cross], t[cross], h[cross])
        tiny = ~cross & (np.abs(amp_new) < node_tol * p[8])
        stop_code[tiny] = EV_NODE
        if check_center:
            level = center_radius * p[9]
            inner = _monitor(3, kind, p, ex, cf, dim, scaled, t_new, y1) < level
            if inner.any():
                th = _locate(3, level, kind, p, ex, cf, dim, scaled, rc[inner], t[inner], h[inner])
                take = (stop_code[inner] == 0) | (th < stop_theta[inner])
                sub = np.flatnonzero(inner)[take]
                stop_code[sub] = EV_CENTER
                stop_theta[sub] = th[take]
        esc_theta = np.full(lanes.size, 2.0)
        if check_escape:
            live = ~escaped[lanes]
            q_new = _monitor(1, kind, p, ex, cf, dim, scaled, t_new, y1)
            up = live & (q_new > escape_radius) & (q_old[lanes] <= escape_radius)
            if up.any():
                esc_theta[up] = _locate(1, escape_radius, kind, p, ex, cf, dim, scaled, rc[up], t[up], h[up])
            q_old[lanes[live]] = q_new[live]
        esc = (esc_theta <= 1.0) & ((stop_code == 0) | (esc_theta <= stop_theta))
        if esc.any():
            el = lanes[esc]
            escaped[el] = True
            record(el, EV_ESCAPED, t[esc] + esc_theta[esc] * h[esc], _dense(rc[esc], esc_theta[esc]))
            if stop_on_escape:
                stop_code[esc] = EV_ESCAPED
                stop_theta[esc] = esc_theta[esc]

        stopping = stop_code != 0
        t_stop = np.where(stopping, t + stop_theta * h, t_new)
        while True:
            pend = iout[lanes] < ns
            nxt = np.where(pend, ts[np.minimum(iout[lanes], ns - 1)], np.inf)
            sel = pend & (nxt <= t_stop)
            if not sel.any():
                break
            sl = lanes[sel]
            OUT[sl, iout[sl]] = _dense(rc[sel], (nxt[sel] - t[sel]) / h[sel])
            iout[sl] += 1

        term = stopping & (stop_code != EV_ESCAPED)
        if term.any():
            for code in (EV_NODE, EV_CENTER):
                m = term & (stop_code == code)
                if m.any():
                    record(lanes[m], code, t_stop[m], _dense(rc[m], stop_theta[m]))
        active[lanes[stopping]] = False

        go = ~stopping
        gl = lanes[go]
        Y[gl] = y1[go]
        K1[gl] = k7[go]
        T[gl] = t_new[go]
        amp_old[gl] = amp_new[go]
        done = go & last
        if done.any():
            dl = lanes[done]
            record(dl, EV_COMPLETED, T[dl], Y[dl])
            active[dl] = False
        cont = go & ~last
        cl = lanes[cont]
        hn = np.minimum(hnew[cont], max_step)
        hn = np.where(reject[cl], np.minimum(hn, h[cont]), hn)
        reject[cl] = False
        H[cl] = hn
    return OUT, EV, COUNTS
