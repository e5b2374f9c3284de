"""Closed-form field kernels for the catalog wave functions.

Every function here takes ``(kind, p, ex, cf, x, y, z, t)`` where ``kind`` is
one of the integer codes below, ``p`` the float parameter vector built by
:mod:`qpd.wavemodels`, and ``ex``/``cf`` the monomial tables of the angular
polynomial (only used by ``CENTRAL``). Coordinates may be float scalars or
equally shaped arrays; the code sticks to numpy ufuncs and arithmetic so the
same source runs under numba (scalars), plain numpy (arrays) and extended
precision (``np.longdouble`` arrays, used by the finite-difference oracle).

Parameter layout::

    p[0] hbar   p[1] mass   p[8] amplitude scale   p[9] length scale
    FREE      -
    COHERENT  p[2] a
    HARMONIC  p[2] n        p[3] normalization
    STEP      p[2] E        p[3] V   p[4] k   p[5] kappa   p[6] alpha
    CENTRAL   p[2] E        p[3] beta   p[4] radial norm   p[5] coulomb k   p[6] l
    RADIAL    p[2] C                              (reduced r-equation only)

Polynomial rows: 0 P, 1-3 gradient, 4 xx, 5 xy, 6 xz, 7 yy, 8 yz, 9 zz.
"""

import numpy as np

FREE = 0
COHERENT = 1
HARMONIC = 2
STEP = 3
CENTRAL = 4
RADIAL = 5

NPARAMS = 10

KERNELS = (
    "_radius",
    "_select",
    "poly",
    "hermite4",
    "amplitude",
    "field",
    "velocity",
    "classical_potential",
    "quantum_potential",
    "acceleration",
    "packet_scale",
)


def poly(ex, cf, j, x, y, z):
    acc = 0j * x
    for k in range(ex.shape[1]):
        acc = acc + cf[j, k] * (x ** ex[j, k, 0]) * (y ** ex[j, k, 1]) * (z ** ex[j, k, 2])
    return acc


def hermite4(n, x):
    """Physicists' Hermite H_n, H_{n-1}, H_{n-2}, H_{n-3} by recurrence (zero below 0)."""
    h0 = 0.0 * x
    h1 = 0.0 * x
    h2 = 0.0 * x
    h3 = 1.0 + 0.0 * x
    for k in range(n):
        nxt = 2.0 * x * h3 - 2.0 * k * h2
        h0 = h1
        h1 = h2
        h2 = h3
        h3 = nxt
    return h3, h2, h1, h0


def _radius(x, y, z):
    return np.sqrt(x * x + y * y + z * z)


def _select(mask, a, b):
    # np.where returns 0-d arrays for scalars, which numba cannot unify with floats
    w = 1.0 * mask
    return w * a + (1.0 - w) * b


def amplitude(kind, p, ex, cf, x, y, z, t):
    """Signed amplitude for real 1D eigenstates, |psi| otherwise."""
    if kind == FREE:
        s = 1.0 + t * t
        return (2.0 * np.pi * s) ** -0.25 * np.exp(-x * x / (4.0 * s))
    elif kind == COHERENT:
        d = x - p[2] * np.cos(t)
        return np.pi ** -0.25 * np.exp(-0.5 * d * d)
    elif kind == HARMONIC:
        hn, _, _, _ = hermite4(int(p[2]), x)
        return p[3] * np.exp(-0.5 * x * x) * hn
    elif kind == STEP:
        k = p[4]
        half = 0.5 * p[6]
        left = np.cos(k * x - half)
        right = np.cos(half) * np.exp(-p[5] * np.maximum(x, 0.0))
        return _select(x < 0.0, left, right)
    elif kind == CENTRAL:
        r = _radius(x, y, z)
        return p[4] * np.exp(-p[3] * r) * np.abs(poly(ex, cf, 0, x, y, z))
    return 0.0 * x


def field(kind, p, ex, cf, x, y, z, t):
    """Closed-form (R, S, dS/dx, dS/dy, dS/dz, dR/dx, dR/dy, dR/dz, lap R)."""
    zero = 0.0 * x
    hbar = p[0]
    if kind == FREE:
        s = 1.0 + t * t
        R = (2.0 * np.pi * s) ** -0.25 * np.exp(-x * x / (4.0 * s))
        S = hbar * (x * x * t / (4.0 * s) - 0.5 * np.arctan(t))
        gS = hbar * x * t / (2.0 * s)
        gR = -x / (2.0 * s) * R
        lap = (x * x / (4.0 * s * s) - 1.0 / (2.0 * s)) * R
        return R, S, gS, zero, zero, gR, zero, zero, lap
    elif kind == COHERENT:
        a = p[2]
        d = x - a * np.cos(t)
        R = np.pi ** -0.25 * np.exp(-0.5 * d * d)
        S = -hbar * (0.5 * t + x * a * np.sin(t) - 0.25 * a * a * np.sin(2.0 * t))
        gS = zero - hbar * a * np.sin(t)
        return R, S, gS, zero, zero, -d * R, zero, zero, (d * d - 1.0) * R
    elif kind == HARMONIC:
        n = int(p[2])
        hn, hn1, hn2, _ = hermite4(n, x)
        d1 = 2.0 * n * hn1
        d2 = 4.0 * n * (n - 1) * hn2
        g = p[3] * np.exp(-0.5 * x * x)
        R = g * hn
        S = zero - hbar * (n + 0.5) * t
        gR = g * (d1 - x * hn)
        lap = g * (d2 - 2.0 * x * d1 + (x * x - 1.0) * hn)
        return R, S, zero, zero, zero, gR, zero, zero, lap
    elif kind == STEP:
        k = p[4]
        kappa = p[5]
        half = 0.5 * p[6]
        inside = x < 0.0
        ph = k * x - half
        ev = np.cos(half) * np.exp(-kappa * np.maximum(x, 0.0))
        R = _select(inside, np.cos(ph), ev)
        gR = _select(inside, -k * np.sin(ph), -kappa * ev)
        lap = _select(inside, -k * k * np.cos(ph), kappa * kappa * ev)
        S = zero - hbar * p[2] * t
        return R, S, zero, zero, zero, gR, zero, zero, lap
    elif kind == CENTRAL:
        beta = p[3]
        r = _radius(x, y, z)
        P = poly(ex, cf, 0, x, y, z)
        Px = poly(ex, cf, 1, x, y, z)
        Py = poly(ex, cf, 2, x, y, z)
        Pz = poly(ex, cf, 3, x, y, z)
        lapP = poly(ex, cf, 4, x, y, z) + poly(ex, cf, 7, x, y, z) + poly(ex, cf, 9, x, y, z)
        absP2 = P.real * P.real + P.imag * P.imag
        absP = np.sqrt(absP2)
        g = p[4] * np.exp(-beta * r)
        R = g * absP
        Pc = np.conj(P)
        rex = (Pc * Px).real
        rey = (Pc * Py).real
        rez = (Pc * Pz).real
        gS = (hbar * (Pc * Px).imag / absP2, hbar * (Pc * Py).imag / absP2, hbar * (Pc * Pz).imag / absP2)
        gradP2 = (Px * np.conj(Px)).real + (Py * np.conj(Py)).real + (Pz * np.conj(Pz)).real
        radial_dir = (x * rex + y * rey + z * rez) / (r * absP2)
        lap_abs = ((Pc * lapP).real + gradP2) / absP2 - (rex * rex + rey * rey + rez * rez) / (absP2 * absP2)
        lap = R * (beta * beta - 2.0 * beta / r - 2.0 * beta * radial_dir + lap_abs)
        ph = P * np.exp(-1j * p[2] * t / hbar)
        S = hbar * np.arctan2(ph.imag, ph.real)
        gRx = g * (-beta * x / r * absP + rex / absP)
        gRy = g * (-beta * y / r * absP + rey / absP)
        gRz = g * (-beta * z / r * absP + rez / absP)
        return R, S, gS[0], gS[1], gS[2], gRx, gRy, gRz, lap
    return zero, zero, zero, zero, zero, zero, zero, zero, zero


def velocity(kind, p, ex, cf, x, y, z, t):
    """The guidance field grad(S)/m."""
    zero = 0.0 * x
    if kind == FREE:
        return p[0] * x * t / (2.0 * (1.0 + t * t)) / p[1], zero, zero
    elif kind == COHERENT:
        return zero - p[0] * p[2] * np.sin(t) / p[1], zero, zero
    elif kind == CENTRAL:
        P = poly(ex, cf, 0, x, y, z)
        c = p[0] / p[1]
        return c * (poly(ex, cf, 1, x, y, z) / P).imag, c * (poly(ex, cf, 2, x, y, z) / P).imag, c * (poly(ex, cf, 3, x, y, z) / P).imag
    return zero, zero, zero


def classical_potential(kind, p, ex, cf, x, y, z, t):
    if kind == COHERENT or kind == HARMONIC:
        return 0.5 * p[1] * x * x
    elif kind == STEP:
        return _select(x < 0.0, 0.0 * x, p[3] + 0.0 * x)
    elif kind == CENTRAL:
        return -p[5] / _radius(x, y, z)
    elif kind == RADIAL:
        return p[2] / (x * x)
    return 0.0 * x


def quantum_potential(kind, p, ex, cf, x, y, z, t):
    if kind == RADIAL:
        return 0.0 * x
    f = field(kind, p, ex, cf, x, y, z, t)
    return -(p[0] * p[0] / (2.0 * p[1])) * f[8] / f[0]


def acceleration(kind, p, ex, cf, x, y, z, t):
    """Total force divided by mass, -grad(V + Q)/m, from closed-form gradients."""
    zero = 0.0 * x
    hbar = p[0]
    m = p[1]
    qc = hbar * hbar / (2.0 * m)
    if kind == FREE:
        s = 1.0 + t * t
        return qc * x / (2.0 * s * s) / m, zero, zero
    elif kind == COHERENT:
        d = x - p[2] * np.cos(t)
        dQ = -2.0 * qc * d
        return -(m * x + dQ) / m, zero, zero
    elif kind == HARMONIC:
        n = int(p[2])
        hn, hn1, hn2, hn3 = hermite4(n, x)
        d1 = 2.0 * n * hn1
        d2 = 4.0 * n * (n - 1) * hn2
        d3 = 8.0 * n * (n - 1) * (n - 2) * hn3
        u1 = d1 - x * hn
        u2 = d2 - 2.0 * x * d1 + (x * x - 1.0) * hn
        u3 = d3 - 3.0 * x * d2 + 3.0 * (x * x - 1.0) * d1 + (3.0 * x - x * x * x) * hn
        dQ = -qc * (u3 * hn - u2 * u1) / (hn * hn)
        return -(m * x + dQ) / m, zero, zero
    elif kind == CENTRAL:
        beta = p[3]
        l = p[6]
        r = _radius(x, y, z)
        P = poly(ex, cf, 0, x, y, z)
        ux = poly(ex, cf, 1, x, y, z) / P
        uy = poly(ex, cf, 2, x, y, z) / P
        uz = poly(ex, cf, 3, x, y, z) / P
        hxx = poly(ex, cf, 4, x, y, z) / P
        hxy = poly(ex, cf, 5, x, y, z) / P
        hxz = poly(ex, cf, 6, x, y, z) / P
        hyy = poly(ex, cf, 7, x, y, z) / P
        hyz = poly(ex, cf, 8, x, y, z) / P
        hzz = poly(ex, cf, 9, x, y, z) / P
        sx = ux.imag
        sy = uy.imag
        sz = uz.imag
        # grad |Im(grad P / P)|^2 with d_j u_i = H_ij / P - u_i u_j
        gx = 2.0 * (sx * (hxx - ux * ux).imag + sy * (hxy - uy * ux).imag + sz * (hxz - uz * ux).imag)
        gy = 2.0 * (sx * (hxy - ux * uy).imag + sy * (hyy - uy * uy).imag + sz * (hyz - uz * uy).imag)
        gz = 2.0 * (sx * (hxz - ux * uz).imag + sy * (hyz - uy * uz).imag + sz * (hzz - uz * uz).imag)
        r3 = r * r * r
        radial = p[5] / r3 - qc * 2.0 * beta * (l + 1.0) / r3
        return -(radial * x - qc * gx) / m, -(radial * y - qc * gy) / m, -(radial * z - qc * gz) / m
    elif kind == RADIAL:
        return 2.0 * p[2] / (m * x * x * x), zero, zero
    return zero, zero, zero


def packet_scale(kind, p, t):
    if kind == FREE:
        return np.sqrt(1.0 + t * t)
    return p[9] + 0.0 * t
