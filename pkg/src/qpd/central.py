"""Motion in fixed-(E, l) central eigenstates: angular function, constants of motion, regimes.

Within a fixed-(E, l) eigenstate the total potential is V + Q = E + f(theta, phi) / r^2
with f = -r^2 |grad S|^2 / 2m0. Energies here drop the constant E, so
Etilde = m0 |v|^2 / 2 + f / r^2 and C = |L|^2 / 2m0 + f, and the radial
coordinate obeys m0 r'' = 2C / r^3 with closed-form solution
r(t)^2 = r0^2 + 2 r0 rdot0 t + (2 Etilde / m0) t^2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from . import fields, stepper
from .dynamics import build_record, run_kernel
from .errors import DomainError, NodeError, ValidationError
from .wavemodels import NODE_THRESHOLD, spherical_harmonic, spherical_harmonic_dtheta

ZERO_BAND = 1e-10


def _angular_sums(l, c, theta, phi):
    """Y, dY/dtheta, d2Y/dtheta2, dY/dphi, d2Y/dphi2, d2Y/dtheta dphi of sum_m c_m Y_lm."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = np.sin(theta)
    cot = np.cos(theta) / s
    Y = Yt = Ytt = Yp = Ypp = Ytp = 0j
    for m, cm in zip(range(-l, l + 1), c):
        if cm == 0:
            continue
        y = spherical_harmonic(l, m, theta, phi)
        yt = spherical_harmonic_dtheta(l, m, theta, phi)
        # associated Legendre equation solved for the second theta derivative
        ytt = -cot * yt + (m * m / (s * s) - l * (l + 1)) * y
        Y = Y + cm * y
        Yt = Yt + cm * yt
        Ytt = Ytt + cm * ytt
        Yp = Yp + cm * 1j * m * y
        Ypp = Ypp + cm * (-m * m) * y
        Ytp = Ytp + cm * 1j * m * yt
    return Y, Yt, Ytt, Yp, Ypp, Ytp


def _check_angles(theta):
    s = np.sin(np.asarray(theta, dtype=float))
    if np.any(np.abs(s) < 1e-14):
        raise DomainError("spherical-coordinate route is singular on the polar axis")
    return s


def angular_kinetic_f(l, c, theta, phi, m0=1.0, hbar=1.0):
    """f(theta, phi) = -r^2 |grad S|^2 / 2m0 from spherical-harmonic derivatives.

    ``c`` holds the coefficients for m = -l..l and must be normalized.
    """
    c = np.asarray(c, dtype=complex)
    if c.size != 2 * l + 1:
        raise ValidationError(f"need {2 * l + 1} coefficients for l={l}")
    if not math.isclose(float(np.sum(np.abs(c) ** 2)), 1.0, rel_tol=1e-9):
        raise ValidationError("coefficients must satisfy sum |c_m|^2 = 1")
    s = _check_angles(theta)
    Y, Yt, _, Yp, _, _ = _angular_sums(l, c, theta, phi)
    absY = np.abs(Y)
    if np.any(absY < NODE_THRESHOLD):
        raise NodeError("angular superposition vanishes here")
    g_theta = (Yt / Y).imag
    g_phi = (Yp / Y).imag / s
    f = -(hbar * hbar / (2.0 * m0)) * (g_theta * g_theta + g_phi * g_phi)
    return f[()] if np.ndim(f) == 0 else f


def _to_spherical(x):
    x = np.asarray(x, dtype=float)
    r = np.sqrt(np.sum(x * x, axis=-1))
    theta = np.arccos(np.clip(x[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(x[..., 1], x[..., 0])
    return r, theta, phi


def effective_force(model, x):
    """-grad(f / r^2) at Cartesian points, shape (..., 3).

    Independent of the amplitude route: uses only the angular superposition and
    its first and second angular derivatives.
    """
    r, theta, phi = _to_spherical(x)
    if np.any(r == 0):
        raise DomainError("effective force undefined at r = 0")
    s = _check_angles(theta)
    ct = np.cos(theta)
    Y, Yt, Ytt, Yp, Ypp, Ytp = _angular_sums(model.l, model.c, theta, phi)
    if np.any(np.abs(Y) < NODE_THRESHOLD):
        raise NodeError("effective force undefined on the angular node")
    ut, up = Yt / Y, Yp / Y
    g_t, g_p = ut.imag, up.imag
    dgt_dt = (Ytt / Y - ut * ut).imag
    dgt_dp = (Ytp / Y - ut * up).imag
    dgp_dp = (Ypp / Y - up * up).imag
    k = -(model.hbar ** 2) / (2.0 * model.m0)
    f = k * (g_t * g_t + g_p * g_p / (s * s))
    df_dt = k * (2 * g_t * dgt_dt + 2 * g_p * dgt_dp / (s * s) - 2 * g_p * g_p * ct / (s * s * s))
    df_dp = k * (2 * g_t * dgt_dp + 2 * g_p * dgp_dp / (s * s))
    r3 = r ** 3
    fr = 2.0 * f / r3
    ft = -df_dt / r3
    fp = -df_dp / (s * r3)
    cp, sp = np.cos(phi), np.sin(phi)
    fx = fr * s * cp + ft * ct * cp - fp * sp
    fy = fr * s * sp + ft * ct * sp + fp * cp
    fz = fr * ct - ft * s
    return np.stack([fx, fy, fz], axis=-1)


def angular_function(model):
    """f(theta, phi) for a central model, via the phase gradient on the unit sphere."""
    kind, p, ex, cf = model.kernel_args()
    m0 = model.m0

    def f_at(theta, phi):
        st = np.sin(theta)
        x, y, z = st * np.cos(phi), st * np.sin(phi), np.cos(theta)
        if np.any(np.abs(fields.amplitude(kind, p, ex, cf, x, y, z, 0.0)) < NODE_THRESHOLD * p[8]):
            raise NodeError("angular function undefined on the node line")
        ux, uy, uz = fields.velocity(kind, p, ex, cf, x, y, z, 0.0)
        return -0.5 * m0 * (ux * ux + uy * uy + uz * uz)

    return f_at


@dataclass(frozen=True)
class CentralInvariants:
    Etilde: float
    C: float
    f_at: Callable
    energy_scale: float = 1.0
    c_scale: float = 1.0

    def regime(self, tol=ZERO_BAND):
        """Classify with values inside ``tol`` times their natural scale treated as zero."""
        E = 0.0 if abs(self.Etilde) < tol * self.energy_scale else self.Etilde
        C = 0.0 if abs(self.C) < tol * self.c_scale else self.C
        return classify(E, C)


def invariants_of(state, f_at, m0):
    """Etilde and C of a Cartesian state."""
    x = np.asarray(state.x, dtype=float)
    v = np.asarray(state.v, dtype=float)
    r = float(np.linalg.norm(x))
    if r == 0.0:
        raise DomainError("constants of motion undefined at r = 0")
    theta = math.acos(max(-1.0, min(1.0, x[2] / r)))
    phi = math.atan2(x[1], x[0])
    f = float(f_at(theta, phi))
    L2 = m0 * m0 * float(np.sum(np.cross(x, v) ** 2))
    kinetic = 0.5 * m0 * float(v @ v)
    return CentralInvariants(
        Etilde=kinetic + f / (r * r),
        C=L2 / (2.0 * m0) + f,
        f_at=f_at,
        energy_scale=max(kinetic, abs(f) / (r * r), np.finfo(float).tiny),
        c_scale=max(L2 / (2.0 * m0), abs(f), np.finfo(float).tiny),
    )


class RegimeKind(enum.Enum):
    BOUNDED_OSCILLATING = "bounded_oscillating"
    SPHERE = "sphere"
    UNBOUNDED_CONSTANT_RADIAL_SPEED = "unbounded_constant_radial_speed"
    UNBOUNDED = "unbounded"
    INFEASIBLE = "infeasible"


@dataclass(frozen=True)
class Regime:
    kind: RegimeKind
    turning_radius: float | None = None

    @property
    def bounded(self):
        return self.kind in (RegimeKind.BOUNDED_OSCILLATING, RegimeKind.SPHERE)

    @property
    def name(self):
        return self.kind.value


def classify(Etilde, C):
    """Trajectory family for the constants (Etilde, C); exact sign tests."""
    if C > 0:
        if Etilde > 0:
            return Regime(RegimeKind.UNBOUNDED, math.sqrt(C / Etilde))
        return Regime(RegimeKind.INFEASIBLE)
    if C == 0:
        if Etilde > 0:
            return Regime(RegimeKind.UNBOUNDED_CONSTANT_RADIAL_SPEED)
        if Etilde == 0:
            return Regime(RegimeKind.SPHERE)
        return Regime(RegimeKind.INFEASIBLE)
    if Etilde >= 0:
        return Regime(RegimeKind.UNBOUNDED)
    return Regime(RegimeKind.BOUNDED_OSCILLATING, math.sqrt(C / Etilde))


def implied_C(r0, rdot0, Etilde, m0):
    return r0 * r0 * (Etilde - 0.5 * m0 * rdot0 * rdot0)


def center_time(r0, rdot0, Etilde, m0):
    """First t > 0 where the radicand of r(t)^2 reaches zero, or None."""
    a = 2.0 * Etilde / m0
    b = 2.0 * r0 * rdot0
    c = r0 * r0
    if a == 0.0:
        return -c / b if b < 0 else None
    disc = b * b - 4 * a * c
    if disc < 0:
        return None
    # cancellation-free pair of roots
    q = -0.5 * (b + math.copysign(math.sqrt(disc), b))
    if q == 0.0:
        # b = 0 and 4ac underflowed: a > 0 with no real root
        return None
    roots = sorted((q / a, c / q))
    for root in roots:
        if root > 0:
            return root
    return None


def radial_trajectory(r0, rdot0, Etilde, m0, t):
    """r(t) = sqrt(r0^2 + 2 r0 rdot0 t + (2 Etilde / m0) t^2)."""
    if not r0 > 0:
        raise DomainError("r0 must be positive")
    t = np.asarray(t, dtype=float)
    rad = r0 * r0 + 2.0 * r0 * rdot0 * t + (2.0 * Etilde / m0) * t * t
    if np.any(rad <= 0):
        tc = center_time(r0, rdot0, Etilde, m0)
        raise DomainError(f"center reached at t = {tc:.12g}; r(t) undefined beyond it")
    r = np.sqrt(rad)
    return r[()] if r.ndim == 0 else r


@dataclass(frozen=True)
class RadialReduced:
    """One-dimensional reduced motion m0 r'' = 2C / r^3 for the integrator kernels."""

    C: float
    m0: float = 1.0

    dim = 1
    kind_code = fields.RADIAL
    energy = None
    hbar = 1.0

    @property
    def mass(self):
        return self.m0

    @property
    def amplitude_scale(self):
        return 0.0

    def kernel_args(self):
        p = np.zeros(fields.NPARAMS)
        p[0], p[1], p[2], p[9] = 1.0, self.m0, self.C, 1.0
        return fields.RADIAL, p, np.zeros((10, 1, 3), dtype=np.int64), np.zeros((10, 1), dtype=np.complex128)

    @property
    def params(self):
        return self.kernel_args()[1]

    def packet_scale(self, t):
        return np.ones_like(np.asarray(t, dtype=float))


def integrate_radial(r0, rdot0, C, m0, settings):
    """Integrate the reduced radial equation numerically; Etilde column is m0 rdot^2/2 + C/r^2."""
    if not r0 > 0:
        raise DomainError("r0 must be positive")
    model = RadialReduced(C, m0)
    if settings.escape_radius is None:
        settings = replace(settings, escape_radius=math.inf)
    ts = settings.times(0.0)
    y0 = np.zeros(6)
    y0[0], y0[3] = r0, rdot0
    OUT, EV, COUNTS = run_kernel(model, stepper.QPD, y0[None], 0.0, ts, settings)
    return build_record(model, stepper.QPD, ts, OUT[0], EV[0], COUNTS[0])

