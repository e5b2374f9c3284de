"""Quantum potential, total force and particle energy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields
from .errors import NodeError, ValidationError
from .wavemodels import NODE_THRESHOLD, phase_gradient, split_coords

POTENTIAL_KINDS = ("free", "step", "harmonic", "coulomb")

_PAIRING = {
    fields.FREE: "free",
    fields.COHERENT: "harmonic",
    fields.HARMONIC: "harmonic",
    fields.STEP: "step",
    fields.CENTRAL: "coulomb",
}


@dataclass(frozen=True)
class ClassicalPotential:
    """External potential V; ``height`` is the step height, ``strength`` k in V = -k/r."""

    kind: str
    height: float | None = None
    strength: float | None = None

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ValidationError(f"unknown potential kind {self.kind!r}")

    @classmethod
    def for_model(cls, model):
        kind = _PAIRING[model.kind_code]
        if kind == "step":
            return cls(kind, height=model.V)
        if kind == "coulomb":
            return cls(kind, strength=float(model.params[5]))
        return cls(kind)

    def check_pairing(self, model):
        expected = self.for_model(model)
        if self.kind != expected.kind:
            raise ValidationError(f"{type(model).__name__} pairs with a {expected.kind!r} potential, not {self.kind!r}")
        if self.kind == "step" and self.height is not None and self.height != expected.height:
            raise ValidationError(f"step height {self.height} does not match the eigenstate's V={expected.height}")
        if self.kind == "coulomb" and self.strength is not None and not np.isclose(self.strength, expected.strength, rtol=1e-12):
            raise ValidationError(f"coulomb strength {self.strength} does not match the radial profile ({expected.strength})")

    def value(self, model, x):
        xs, ys, zs = split_coords(model, x)
        kind, p, ex, cf = model.kernel_args()
        return fields.classical_potential(kind, p, ex, cf, xs, ys, zs, 0.0)


@dataclass(frozen=True)
class ParticleEnergy:
    Etilde: float
    kinetic: float
    V: float
    Q: float


def _node_mask(model, R):
    return np.abs(R) < NODE_THRESHOLD * model.amplitude_scale


def _has_real_continuation(model):
    return model.kind_code in (fields.HARMONIC, fields.STEP)


def quantum_potential(model, x, t):
    """Q = -(hbar^2 / 2m) lap(R) / R from the closed-form amplitude derivatives.

    Real 1D eigenstates continue smoothly through their nodes with Q = E - V;
    other models raise :class:`NodeError` there.
    """
    xs, ys, zs = split_coords(model, x)
    xs, ys, zs, tb = np.broadcast_arrays(xs, ys, zs, np.asarray(t, dtype=float))
    kind, p, ex, cf = model.kernel_args()
    with np.errstate(divide="ignore", invalid="ignore"):
        f = fields.field(kind, p, ex, cf, xs, ys, zs, tb)
        Q = -(model.hbar ** 2 / (2 * model.mass)) * f[8] / f[0]
    nodes = _node_mask(model, f[0])
    if np.any(nodes):
        if not _has_real_continuation(model):
            raise NodeError(f"quantum potential undefined at a node of {type(model).__name__}")
        V = fields.classical_potential(kind, p, ex, cf, xs, ys, zs, tb)
        Q = np.where(nodes, model.energy - V, Q)
    return Q[()] if np.ndim(Q) == 0 else Q


def quantum_potential_fd(model, x, t, h=1e-4, extended=True):
    """Central second-difference estimate of Q; truncation error O(h^2).

    With ``extended`` the amplitude is evaluated in ``np.longdouble`` so that
    round-off stays below the truncation error down to h ~ 1e-4.
    """
    dtype = np.longdouble if extended else np.float64
    xs, ys, zs = split_coords(model, x)
    xs, ys, zs, tb = np.broadcast_arrays(xs, ys, zs, np.asarray(t, dtype=float))
    base = [np.asarray(c, dtype=dtype) for c in (xs, ys, zs)]
    tb = np.asarray(tb, dtype=dtype)
    hh = dtype(h)
    kind, p, ex, cf = model.kernel_args()

    def amp(c):
        return fields.amplitude(kind, p, ex, cf, c[0], c[1], c[2], tb)

    R0 = amp(base)
    thr = NODE_THRESHOLD * model.amplitude_scale
    bad = np.abs(R0) < thr
    lap = np.zeros_like(R0)
    for axis in range(model.dim):
        plus = list(base)
        minus = list(base)
        plus[axis] = base[axis] + hh
        minus[axis] = base[axis] - hh
        Rp, Rm = amp(plus), amp(minus)
        bad |= (np.abs(Rp) < thr) | (np.abs(Rm) < thr) | (Rp * R0 <= 0) | (Rm * R0 <= 0)
        lap = lap + (Rp - 2 * R0 + Rm) / (hh * hh)
    if np.any(bad):
        raise NodeError(f"finite-difference stencil touches a node of {type(model).__name__}")
    Q = -(model.hbar ** 2 / (2 * model.mass)) * (lap / R0).astype(float)
    return Q[()] if np.ndim(Q) == 0 else Q


def total_force(model, pot, x, t):
    """-grad(V + Q) from closed-form gradients; shape (..., dim)."""
    pot.check_pairing(model)
    xs, ys, zs = split_coords(model, x)
    xs, ys, zs, tb = np.broadcast_arrays(xs, ys, zs, np.asarray(t, dtype=float))
    kind, p, ex, cf = model.kernel_args()
    if np.any(_node_mask(model, fields.amplitude(kind, p, ex, cf, xs, ys, zs, tb))):
        raise NodeError(f"force undefined at a node of {type(model).__name__}")
    ax, ay, az = fields.acceleration(kind, p, ex, cf, xs, ys, zs, tb)
    if model.dim == 1:
        return model.mass * np.asarray(ax)[..., None]
    return model.mass * np.stack(np.broadcast_arrays(ax, ay, az), axis=-1)


def particle_energy(state, model, pot):
    """Etilde = m |v|^2 / 2 + V + Q at the state's position and time."""
    pot.check_pairing(model)
    v = np.asarray(state.v, dtype=float)
    kinetic = 0.5 * model.mass * float(np.sum(v * v))
    V = float(pot.value(model, state.x))
    Q = float(quantum_potential(model, state.x, state.t))
    return ParticleEnergy(Etilde=kinetic + V + Q, kinetic=kinetic, V=V, Q=Q)


def eigen_identity_residual(model, x, t=0.0):
    """|V + Q + |grad S|^2 / 2m - E| at the given points of an energy eigenstate."""
    if not model.is_eigenstate:
        raise ValidationError(f"{type(model).__name__} is not an energy eigenstate")
    V = ClassicalPotential.for_model(model).value(model, x)
    Q = quantum_potential(model, x, t)
    u = phase_gradient(model, x, t)
    kinetic = 0.5 * model.mass * np.sum(u * u, axis=-1)
    return np.abs(V + Q + kinetic - model.energy)
