"""Catalog of closed-form wave functions and their field quantities.

Unit conventions per model:

* :class:`FreeGaussian1D` - hbar = 2m = sigma = 1
* :class:`StepEigenstate1D` - hbar = 2m = 1
* :class:`CoherentState1D`, :class:`HarmonicEigenstate1D` - hbar = m = omega = 1
* :class:`CentralSuperposition` - hbar and m0 configurable (default 1)
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial import legendre as npleg
from numpy.polynomial import polynomial as nppoly

from . import fields
from .errors import DomainError, NodeError, ValidationError

NODE_THRESHOLD = 1e-12

_DUMMY_EX = np.zeros((10, 1, 3), dtype=np.int64)
_DUMMY_CF = np.zeros((10, 1), dtype=np.complex128)
_DUMMY_EX.flags.writeable = False
_DUMMY_CF.flags.writeable = False


@dataclass(frozen=True)
class UnitConvention:
    hbar: float
    mass: float
    extra: tuple = ()

    def __post_init__(self):
        if not (self.hbar > 0 and self.mass > 0):
            raise ValidationError("hbar and mass must be positive")


# ---------------------------------------------------------------- spherical harmonics


def _check_lm(l, m):
    if l < 0 or abs(m) > l:
        raise DomainError(f"spherical harmonic requires |m| <= l, got l={l}, m={m}")


def _assoc_legendre(l, m, u):
    """P_l^m(u) for m >= 0 with the Condon-Shortley phase, by upward recurrence in l."""
    u = np.asarray(u, dtype=float)
    somx2 = np.sqrt(np.maximum(0.0, (1.0 - u) * (1.0 + u)))
    pmm = np.ones_like(u)
    fact = 1.0
    for _ in range(m):
        pmm = -pmm * fact * somx2
        fact += 2.0
    if l == m:
        return pmm
    pmmp1 = u * (2 * m + 1) * pmm
    if l == m + 1:
        return pmmp1
    for ll in range(m + 2, l + 1):
        pll = (u * (2 * ll - 1) * pmmp1 - (ll + m - 1) * pmm) / (ll - m)
        pmm, pmmp1 = pmmp1, pll
    return pmmp1


def _ylm_norm(l, m):
    return math.sqrt((2 * l + 1) / (4 * math.pi) * math.factorial(l - m) / math.factorial(l + m))


def spherical_harmonic(l, m, theta, phi):
    """Orthonormal Y_lm(theta, phi) with Condon-Shortley phase; theta is the polar angle."""
    _check_lm(l, m)
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    am = abs(m)
    y = _ylm_norm(l, am) * _assoc_legendre(l, am, np.cos(theta)) * np.exp(1j * am * phi)
    if m < 0:
        y = (-1) ** am * np.conj(y)
    return y


def spherical_harmonic_dtheta(l, m, theta, phi):
    """d Y_lm / d theta via m cot(theta) Y_lm + sqrt((l-m)(l+m+1)) e^{-i phi} Y_l,m+1."""
    _check_lm(l, m)
    theta = np.asarray(theta, dtype=float)
    out = m / np.tan(theta) * spherical_harmonic(l, m, theta, phi)
    if m < l:
        out = out + math.sqrt((l - m) * (l + m + 1)) * np.exp(-1j * np.asarray(phi)) * spherical_harmonic(l, m + 1, theta, phi)
    return out


def solid_harmonic_terms(l, m):
    """Monomial expansion {(a, b, c): coeff} of r^l Y_lm(theta, phi) in x, y, z."""
    _check_lm(l, m)
    am = abs(m)
    K = (-1) ** am * _ylm_norm(l, am)
    legendre = npleg.leg2poly([0] * l + [1])
    dcoef = nppoly.polyder(legendre, am) if am else legendre
    terms = {}
    for j, aj in enumerate(dcoef):
        if aj == 0.0:
            continue
        q, rem = divmod(l - am - j, 2)
        if rem:
            continue
        for q1 in range(q + 1):
            for q2 in range(q - q1 + 1):
                q3 = q - q1 - q2
                mult = math.factorial(q) // (math.factorial(q1) * math.factorial(q2) * math.factorial(q3))
                for k in range(am + 1):
                    c = K * aj * mult * math.comb(am, k) * (1j ** k)
                    key = (2 * q1 + am - k, 2 * q2 + k, 2 * q3 + j)
                    terms[key] = terms.get(key, 0.0) + c
    if m < 0:
        terms = {key: (-1) ** am * np.conj(c) for key, c in terms.items()}
    return {key: complex(c) for key, c in terms.items() if c != 0}


def _differentiate(terms, axis):
    out = {}
    for key, c in terms.items():
        e = key[axis]
        if e == 0:
            continue
        k = list(key)
        k[axis] -= 1
        out[tuple(k)] = out.get(tuple(k), 0.0) + c * e
    return out


def polynomial_tables(l, coeffs):
    """Monomial tables (ex, cf) for P = sum_m c_m r^l Y_lm and its first and second derivatives."""
    P = {}
    for m, c in zip(range(-l, l + 1), coeffs):
        if c == 0:
            continue
        for key, v in solid_harmonic_terms(l, m).items():
            P[key] = P.get(key, 0.0) + c * v
    gx, gy, gz = (_differentiate(P, a) for a in range(3))
    rows = [P, gx, gy, gz,
            _differentiate(gx, 0), _differentiate(gx, 1), _differentiate(gx, 2),
            _differentiate(gy, 1), _differentiate(gy, 2), _differentiate(gz, 2)]
    K = max(1, max(len(r) for r in rows))
    ex = np.zeros((10, K, 3), dtype=np.int64)
    cf = np.zeros((10, K), dtype=np.complex128)
    for j, row in enumerate(rows):
        for k, (key, c) in enumerate(sorted(row.items())):
            ex[j, k] = key
            cf[j, k] = c
    ex.flags.writeable = False
    cf.flags.writeable = False
    return ex, cf


# ---------------------------------------------------------------- radial profiles


@dataclass(frozen=True)
class HydrogenLike:
    """Nodeless hydrogen radial function R_nl (l = n - 1) for n <= 3."""

    n: int
    l: int
    a0: float = 1.0

    SUPPORTED = ((1, 0), (2, 1), (3, 2))

    def __post_init__(self):
        if (self.n, self.l) not in self.SUPPORTED:
            raise ValidationError(f"radial profile (n, l) = ({self.n}, {self.l}) not supported; use one of {self.SUPPORTED}")
        if not self.a0 > 0:
            raise ValidationError("a0 must be positive")

    @property
    def beta(self):
        return 1.0 / (self.n * self.a0)

    @property
    def norm(self):
        """Constant N with R(r) = N r^l exp(-r / (n a0))."""
        n = self.n
        return 1.0 / math.sqrt(math.factorial(2 * n) * (n * self.a0 / 2.0) ** (2 * n + 1))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        a = self.a0
        s = r / a
        if self.n == 1:
            return 2.0 * a ** -1.5 * np.exp(-s)
        if self.n == 2:
            return a ** -1.5 / math.sqrt(24.0) * s * np.exp(-s / 2.0)
        return 4.0 / (81.0 * math.sqrt(30.0)) * a ** -1.5 * s * s * np.exp(-s / 3.0)

    def energy(self, hbar, m0):
        return -hbar ** 2 / (2.0 * m0 * self.a0 ** 2 * self.n ** 2)

    def coulomb_strength(self, hbar, m0):
        return hbar ** 2 / (m0 * self.a0)


# ---------------------------------------------------------------- models


class WaveModel:
    """Common interface; concrete models are frozen dataclasses below."""

    dim = 1
    kind_code = -1
    energy = None
    normalizable = True

    @cached_property
    def params(self):
        p = np.zeros(fields.NPARAMS)
        self._fill(p)
        p.flags.writeable = False
        return p

    def _fill(self, p):
        raise NotImplementedError

    @property
    def tables(self):
        return _DUMMY_EX, _DUMMY_CF

    def kernel_args(self):
        ex, cf = self.tables
        return self.kind_code, self.params, ex, cf

    @property
    def hbar(self):
        return self.units.hbar

    @property
    def mass(self):
        return self.units.mass

    @property
    def amplitude_scale(self):
        return float(self.params[8])

    @property
    def is_eigenstate(self):
        return self.energy is not None

    def packet_scale(self, t):
        return fields.packet_scale(self.kind_code, self.params, np.asarray(t, dtype=float))

    def psi(self, x, t):
        raise NotImplementedError


@dataclass(frozen=True)
class FreeGaussian1D(WaveModel):
    kind_code = fields.FREE

    @property
    def units(self):
        return UnitConvention(1.0, 0.5, (("sigma", 1.0),))

    def _fill(self, p):
        p[0], p[1] = 1.0, 0.5
        p[8] = (2 * np.pi) ** -0.25
        p[9] = 1.0

    def psi(self, x, t):
        x = np.asarray(x, dtype=float)
        z = 1.0 + 1j * np.asarray(t, dtype=float)
        return (1.0 / (2 * np.pi * z ** 2)) ** 0.25 * np.exp(-x ** 2 / (4 * z))


@dataclass(frozen=True)
class CoherentState1D(WaveModel):
    a: float = 1.0
    kind_code = fields.COHERENT

    @property
    def units(self):
        return UnitConvention(1.0, 1.0, (("omega", 1.0),))

    def _fill(self, p):
        p[0], p[1], p[2] = 1.0, 1.0, self.a
        p[8] = np.pi ** -0.25
        p[9] = 1.0

    def psi(self, x, t):
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        a = self.a
        return np.pi ** -0.25 * np.exp(-0.5 * (x - a * np.cos(t)) ** 2
                                       - 0.5j * (t + 2 * x * a * np.sin(t) - 0.5 * a ** 2 * np.sin(2 * t)))


@dataclass(frozen=True)
class HarmonicEigenstate1D(WaveModel):
    n: int = 0
    kind_code = fields.HARMONIC

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 0:
            raise ValidationError("harmonic level n must be a nonnegative integer")

    @property
    def units(self):
        return UnitConvention(1.0, 1.0, (("omega", 1.0),))

    @property
    def energy(self):
        return self.n + 0.5

    def _fill(self, p):
        p[0], p[1], p[2] = 1.0, 1.0, self.n
        p[3] = 1.0 / math.sqrt(2.0 ** self.n * math.factorial(self.n) * math.sqrt(math.pi))
        p[8] = np.pi ** -0.25
        p[9] = 1.0

    def psi(self, x, t):
        from scipy.special import eval_hermite

        x = np.asarray(x, dtype=float)
        return self.params[3] * eval_hermite(self.n, x) * np.exp(-x ** 2 / 2) * np.exp(-1j * self.energy * np.asarray(t))


@dataclass(frozen=True)
class StepEigenstate1D(WaveModel):
    E: float = 0.25
    V: float = 1.0
    kind_code = fields.STEP
    normalizable = False

    def __post_init__(self):
        if not (0 < self.E < self.V):
            raise ValidationError(f"step eigenstate needs 0 < E < V (E < V required), got E={self.E}, V={self.V}")

    @property
    def units(self):
        return UnitConvention(1.0, 0.5)

    @property
    def energy(self):
        return self.E

    @property
    def k(self):
        return math.sqrt(self.E)

    @property
    def kappa(self):
        return math.sqrt(self.V - self.E)

    @property
    def alpha(self):
        return 2.0 * math.atan(-self.kappa / self.k)

    def _fill(self, p):
        p[0], p[1], p[2], p[3] = 1.0, 0.5, self.E, self.V
        p[4], p[5], p[6] = self.k, self.kappa, self.alpha
        p[8] = 1.0
        p[9] = 1.0

    def psi(self, x, t):
        x = np.asarray(x, dtype=float)
        phi = np.where(x < 0, np.cos(self.k * x - self.alpha / 2),
                       np.cos(self.alpha / 2) * np.exp(-self.kappa * np.maximum(x, 0)))
        return phi * np.exp(-1j * self.E * np.asarray(t))


@dataclass(frozen=True)
class CentralSuperposition(WaveModel):
    """R_El(r) sum_m c_m Y_lm at fixed (E, l); coefficients ordered m = -l..l."""

    l: int
    c: tuple
    radial: HydrogenLike = None
    hbar: float = 1.0
    m0: float = 1.0

    dim = 3
    kind_code = fields.CENTRAL

    def __post_init__(self):
        c = np.asarray(self.c, dtype=complex).ravel()
        if c.size != 2 * self.l + 1:
            raise ValidationError(f"need {2 * self.l + 1} coefficients for l={self.l}, got {c.size}")
        norm = math.sqrt(float(np.sum(np.abs(c) ** 2)))
        if norm == 0:
            raise ValidationError("coefficients must not all vanish")
        object.__setattr__(self, "c", tuple(complex(v) for v in c / norm))
        radial = self.radial if self.radial is not None else HydrogenLike(self.l + 1, self.l)
        if radial.l != self.l:
            raise ValidationError(f"radial profile l={radial.l} does not match l={self.l}")
        object.__setattr__(self, "radial", radial)
        if not (self.hbar > 0 and self.m0 > 0):
            raise ValidationError("hbar and m0 must be positive")

    @classmethod
    def pure(cls, l, m, **kw):
        c = [0.0] * (2 * l + 1)
        c[m + l] = 1.0
        return cls(l, tuple(c), **kw)

    @property
    def units(self):
        return UnitConvention(self.hbar, self.m0, (("a0", self.radial.a0),))

    @property
    def energy(self):
        return self.radial.energy(self.hbar, self.m0)

    @cached_property
    def tables(self):
        return polynomial_tables(self.l, self.c)

    def _fill(self, p):
        rad = self.radial
        p[0], p[1], p[2] = self.hbar, self.m0, self.energy
        p[3], p[4] = rad.beta, rad.norm
        p[5] = rad.coulomb_strength(self.hbar, self.m0)
        p[6] = self.l
        r_peak = max(self.l, 1) / rad.beta
        p[8] = rad.norm * r_peak ** self.l * math.exp(-rad.beta * r_peak) * math.sqrt((2 * self.l + 1) / (4 * math.pi))
        p[9] = rad.n ** 2 * rad.a0

    def angular(self, theta, phi):
        return sum(c * spherical_harmonic(self.l, m, theta, phi)
                   for m, c in zip(range(-self.l, self.l + 1), self.c) if c != 0)

    def psi(self, x, t):
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        theta = np.arccos(np.clip(x[..., 2] / r, -1.0, 1.0))
        phi = np.arctan2(x[..., 1], x[..., 0])
        return self.radial(r) * self.angular(theta, phi) * np.exp(-1j * self.energy * np.asarray(t) / self.hbar)


# ---------------------------------------------------------------- evaluation


@dataclass(frozen=True)
class FieldSample:
    x: np.ndarray
    t: np.ndarray
    R: np.ndarray
    S: np.ndarray
    gradS: np.ndarray
    gradR: np.ndarray
    lapR: np.ndarray


def split_coords(model, x):
    """Broadcast a position (or stack of positions) into x, y, z component arrays."""
    x = np.asarray(x, dtype=float)
    if model.dim == 1:
        if x.ndim and x.shape[-1:] == (1,):
            x = x[..., 0]
        zero = np.zeros_like(x)
        return x, zero, zero
    if x.shape[-1:] != (3,):
        raise DomainError(f"{type(model).__name__} positions need 3 components, got shape {x.shape}")
    return x[..., 0], x[..., 1], x[..., 2]


def _stack(model, cx, cy, cz):
    if model.dim == 1:
        return np.asarray(cx)[..., None]
    return np.stack(np.broadcast_arrays(cx, cy, cz), axis=-1)


def _guard(model, R, x, t):
    bad = np.abs(R) < NODE_THRESHOLD * model.amplitude_scale
    if np.any(bad):
        raise NodeError(f"amplitude vanishes for {type(model).__name__} at x={np.asarray(x)[bad] if np.ndim(x) else x}, t={t}")


def evaluate(model, x, t):
    """Closed-form R, S, grad S, grad R and lap R at position(s) x and time t."""
    xs, ys, zs = split_coords(model, x)
    t = np.asarray(t, dtype=float)
    xs, ys, zs, tb = np.broadcast_arrays(xs, ys, zs, t)
    kind, p, ex, cf = model.kernel_args()
    with np.errstate(divide="ignore", invalid="ignore"):
        R, S, sx, sy, sz, rx, ry, rz, lap = fields.field(kind, p, ex, cf, xs, ys, zs, tb)
    _guard(model, R, x, t)
    return FieldSample(
        x=np.asarray(x, dtype=float), t=tb, R=R, S=S,
        gradS=_stack(model, sx, sy, sz), gradR=_stack(model, rx, ry, rz), lapR=lap,
    )


def phase_gradient(model, x, t):
    """The de Broglie-Bohm velocity field grad(S)/m."""
    xs, ys, zs = split_coords(model, x)
    xs, ys, zs, tb = np.broadcast_arrays(xs, ys, zs, np.asarray(t, dtype=float))
    kind, p, ex, cf = model.kernel_args()
    _guard(model, fields.amplitude(kind, p, ex, cf, xs, ys, zs, tb), x, t)
    ux, uy, uz = fields.velocity(kind, p, ex, cf, xs, ys, zs, tb)
    return _stack(model, ux, uy, uz)


def amplitude(model, x, t):
    xs, ys, zs = split_coords(model, x)
    kind, p, ex, cf = model.kernel_args()
    return fields.amplitude(kind, p, ex, cf, xs, ys, zs, np.asarray(t, dtype=float))
