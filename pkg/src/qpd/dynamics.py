"""QPD (Newton with the quantum potential) and dBB (guidance) trajectory integration."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _jit, batch, fields, stepper
from .errors import NodeError, StepFailure, ValidationError
from .potential import ClassicalPotential
from .wavemodels import NODE_THRESHOLD, phase_gradient, split_coords

EVENT_NAMES = {
    stepper.EV_ESCAPED: "escaped",
    stepper.EV_NODE: "node",
    stepper.EV_CENTER: "center",
    stepper.EV_FAILURE: "failure",
    stepper.EV_COMPLETED: "completed",
}

CSV_COLUMNS = ("t", "x", "y", "z", "vx", "vy", "vz", "Q", "Etilde", "residual")


@dataclass(frozen=True)
class ParticleState:
    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        v = np.atleast_1d(np.asarray(self.v, dtype=float))
        if x.shape != v.shape or x.ndim != 1:
            raise ValidationError(f"position {x.shape} and velocity {v.shape} must be matching vectors")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v)) and math.isfinite(self.t)):
            raise ValidationError("particle state must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "t", float(self.t))

    def padded(self):
        y = np.zeros(6)
        d = self.x.size
        y[:d] = self.x
        y[3:3 + d] = self.v
        return y


@dataclass(frozen=True)
class IntegratorSettings:
    """Integration controls.

    ``escape_radius`` is measured in packet-width units when the escape test is
    scaled (spreading packets) and in model length units otherwise; ``None``
    means 10 packet scales and ``math.inf`` disables the test.
    """

    t_end: float
    rtol: float = 1e-9
    atol: float = 1e-9
    max_step: float = math.inf
    sample_times: tuple | None = None
    n_samples: int = 201
    escape_radius: float | None = None
    scaled_escape: bool | None = None
    stop_on_escape: bool = True
    node_tol: float = NODE_THRESHOLD
    center_radius: float = 1e-3
    max_steps: int = 2_000_000
    h_init: float = 0.0
    backend: str | None = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValidationError("tolerances must be positive")
        if not self.max_step > 0:
            raise ValidationError("max_step must be positive")
        if self.sample_times is not None:
            ts = np.asarray(self.sample_times, dtype=float)
            if ts.ndim != 1 or np.any(np.diff(ts) <= 0):
                raise ValidationError("sample_times must be strictly increasing")
            object.__setattr__(self, "sample_times", tuple(float(v) for v in ts))

    def times(self, t0):
        if self.sample_times is not None:
            ts = np.asarray(self.sample_times)
            if ts[0] < t0 or ts[-1] > self.t_end:
                raise ValidationError(f"sample_times must lie within [{t0}, {self.t_end}]")
            return ts
        return np.linspace(t0, self.t_end, self.n_samples)

    def scaled_for(self, model):
        if self.scaled_escape is not None:
            return self.scaled_escape
        return model.kind_code == fields.FREE

    def escape_level(self, model):
        scaled = self.scaled_for(model)
        if self.escape_radius is None:
            return 10.0 if scaled else 10.0 * float(model.params[9])
        if math.isinf(self.escape_radius):
            return -1.0
        return float(self.escape_radius)


@dataclass(frozen=True)
class Event:
    kind: str
    t: float
    x: np.ndarray
    v: np.ndarray


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    Q: np.ndarray
    Etilde: np.ndarray
    residual: np.ndarray
    scale: np.ndarray
    events: list = field(default_factory=list)
    dim: int = 1
    mode: str = "qpd"
    steps: tuple = (0, 0)

    def __len__(self):
        return self.t.size

    @property
    def position(self):
        return self.x[:, :self.dim]

    @property
    def velocity(self):
        return self.v[:, :self.dim]

    def event(self, kind):
        for ev in self.events:
            if ev.kind == kind:
                return ev
        return None

    @property
    def final_event(self):
        return self.events[-1] if self.events else None

    def spherical(self):
        """(r, theta, phi, rdot) per sample."""
        x, y, z = self.x[:, 0], self.x[:, 1], self.x[:, 2]
        r = np.sqrt(x * x + y * y + z * z)
        theta = np.arccos(np.clip(z / r, -1.0, 1.0))
        phi = np.arctan2(y, x)
        rdot = np.sum(self.x * self.v, axis=1) / r
        return r, theta, phi, rdot

    def csv_text(self):
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        cols = np.column_stack([self.t, self.x, self.v, self.Q, self.Etilde, self.residual])
        for row in cols:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


# ---------------------------------------------------------------- kernel dispatch


def run_kernel(model, mode, Y0, T0, ts, settings):
    """Integrate rows of ``Y0`` (padded 6-vectors); returns (OUT, EV, COUNTS) arrays."""
    backend = _jit.resolve_backend(settings.backend)
    kind, p, ex, cf = model.kernel_args()
    Y0 = np.ascontiguousarray(np.atleast_2d(Y0), dtype=float)
    T0 = np.broadcast_to(np.asarray(T0, dtype=float), (Y0.shape[0],)).copy()
    ts = np.ascontiguousarray(ts, dtype=float)
    args = (
        kind, p, ex, cf, mode, model.dim, settings.t_end, ts, settings.rtol, settings.atol,
        float(settings.max_step), settings.h_init, settings.escape_level(model), settings.scaled_for(model),
        settings.stop_on_escape, settings.node_tol, settings.center_radius, settings.max_steps,
    )
    if backend == "numpy":
        (kind, p, ex, cf, mode, dim, t_end, ts, *rest) = args
        return batch.integrate_lanes(kind, p, ex, cf, mode, dim, Y0, T0, t_end, ts, *rest)
    k = _jit.compiled()
    N = Y0.shape[0]
    OUT = np.full((N, ts.size, 6), np.nan)
    EV = np.zeros((N, stepper.MAX_EVENTS, 8))
    COUNTS = np.zeros((N, 4), dtype=np.int64)
    (kind, p, ex, cf, mode, dim, t_end, ts, *rest) = args
    if N == 1:
        COUNTS[0] = k.integrate(kind, p, ex, cf, mode, dim, Y0[0], T0[0], t_end, ts, *rest, OUT[0], EV[0])
    else:
        k.run_batch(kind, p, ex, cf, mode, dim, Y0, T0, t_end, ts, *rest, OUT, EV, COUNTS)
    return OUT, EV, COUNTS


def decode_events(model, EV, count):
    d = model.dim
    return [
        Event(EVENT_NAMES[int(row[0])], float(row[1]), row[2:2 + d].copy(), row[5:5 + d].copy())
        for row in EV[:count]
    ]


# ---------------------------------------------------------------- diagnostics


def diagnostics(model, t, x, v):
    """Q, Etilde and constraint residual along sampled states (x, v padded to 3 columns)."""
    kind, p, ex, cf = model.kernel_args()
    with np.errstate(divide="ignore", invalid="ignore"):
        Q = fields.quantum_potential(kind, p, ex, cf, x[:, 0], x[:, 1], x[:, 2], t)
        V = fields.classical_potential(kind, p, ex, cf, x[:, 0], x[:, 1], x[:, 2], t)
        ux, uy, uz = fields.velocity(kind, p, ex, cf, x[:, 0], x[:, 1], x[:, 2], t)
    u = np.column_stack(np.broadcast_arrays(ux, uy, uz))
    kinetic = 0.5 * model.mass * np.sum(v * v, axis=1)
    residual = np.sqrt(np.sum((v - u) ** 2, axis=1))
    return Q, kinetic + V + Q, residual, u


def build_record(model, mode, ts, OUT, EV, COUNTS):
    n = int(COUNTS[0])
    t = ts[:n].copy()
    y = OUT[:n]
    x = y[:, :3].copy()
    if mode == stepper.DBB:
        _, _, _, u = diagnostics(model, t, x, np.zeros_like(x))
        v = u
    else:
        v = y[:, 3:].copy()
    Q, E, res, _ = diagnostics(model, t, x, v)
    if mode == stepper.DBB:
        res = np.zeros_like(res)
    return TrajectoryRecord(
        t=t, x=x, v=v, Q=Q, Etilde=E, residual=res, scale=np.asarray(model.packet_scale(t), dtype=float),
        events=decode_events(model, EV, int(COUNTS[1])), dim=model.dim,
        mode="qpd" if mode == stepper.QPD else "dbb", steps=(int(COUNTS[2]), int(COUNTS[3])),
    )


def _require_amplitude(model, x, t):
    kind, p, ex, cf = model.kernel_args()
    xs, ys, zs = split_coords(model, x)
    R = fields.amplitude(kind, p, ex, cf, xs, ys, zs, t)
    if abs(float(R)) < NODE_THRESHOLD * model.amplitude_scale:
        raise NodeError(f"initial position {x} lies on a node of {type(model).__name__}")


def _finish(record, raise_on_failure):
    ev = record.final_event
    if raise_on_failure and ev is not None and ev.kind == "failure":
        err = StepFailure(f"step size underflow at t={ev.t:.6g}, x={ev.x}", t=ev.t, x=ev.x)
        err.record = record
        raise err
    return record


# ---------------------------------------------------------------- public operations


def dbb_initial_velocity(model, x0, t0=0.0):
    """The velocity grad(S)/m that the guidance constraint prescribes at (x0, t0)."""
    return np.atleast_1d(phase_gradient(model, np.asarray(x0, dtype=float), t0)).reshape(model.dim)


def constraint_residual(state, model):
    """|v - grad(S)/m| at the state."""
    u = dbb_initial_velocity(model, state.x, state.t)
    return float(np.linalg.norm(np.asarray(state.v) - u))


def integrate_qpd(model, pot, init, settings, raise_on_failure=True):
    """Solve m x'' = -grad(V + Q)(x, t) from ``init`` with adaptive Dormand-Prince steps."""
    if pot is None:
        pot = ClassicalPotential.for_model(model)
    pot.check_pairing(model)
    if init.x.size != model.dim:
        raise ValidationError(f"{type(model).__name__} needs {model.dim}-dimensional states")
    _require_amplitude(model, init.x, init.t)
    ts = settings.times(init.t)
    OUT, EV, COUNTS = run_kernel(model, stepper.QPD, init.padded()[None], init.t, ts, settings)
    return _finish(build_record(model, stepper.QPD, ts, OUT[0], EV[0], COUNTS[0]), raise_on_failure)


def integrate_dbb(model, x0, t0, settings, raise_on_failure=True):
    """Solve x' = grad(S)(x, t)/m from x0."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != model.dim:
        raise ValidationError(f"{type(model).__name__} needs {model.dim}-dimensional positions")
    _require_amplitude(model, x0, t0)
    y0 = np.zeros(6)
    y0[:model.dim] = x0
    ts = settings.times(t0)
    OUT, EV, COUNTS = run_kernel(model, stepper.DBB, y0[None], t0, ts, settings)
    return _finish(build_record(model, stepper.DBB, ts, OUT[0], EV[0], COUNTS[0]), raise_on_failure)


def detect_escape(record, escape_radius, scaled=False):
    """First sample beyond ``escape_radius`` with outward radial velocity, else None.

    With ``scaled`` the radius is compared against |x| / packet_scale(t).
    """
    pos = record.position
    rr = np.linalg.norm(pos, axis=1)
    if scaled:
        rr = rr / record.scale
    outward = np.sum(pos * record.velocity, axis=1) > 0
    hits = np.flatnonzero((rr > escape_radius) & outward)
    if hits.size == 0:
        return None
    i = hits[0]
    return Event("escaped", float(record.t[i]), pos[i].copy(), record.velocity[i].copy())


def invariant_drift(values):
    """max |v(t) - v(t0)| over finite samples."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    return float(np.max(np.abs(values - values[0]))) if values.size else math.nan


def energy_balance(model, init, settings, times, dt=1e-5):
    """|dEtilde/dt - dQ/dt|_x at each of ``times`` by centered differences of width 2 dt.

    The trajectory is sampled at t - dt, t, t + dt through dense output; the
    partial time derivative of Q is taken at the fixed position x(t).
    """
    times = np.asarray(times, dtype=float)
    if np.any(times - dt < init.t) or np.any(times + dt > settings.t_end):
        raise ValidationError("balance times need dt of margin inside the integration window")
    grid = np.sort(np.concatenate([times - dt, times, times + dt]))
    rec = integrate_qpd(model, None, init, replace(settings, sample_times=tuple(grid), escape_radius=math.inf))
    n = times.size
    if len(rec) < 3 * n:
        raise StepFailure("trajectory stopped before the last balance time", t=float(rec.t[-1]))
    E = rec.Etilde.reshape(n, 3)
    x = rec.x.reshape(n, 3, 3)[:, 1]
    kind, p, ex, cf = model.kernel_args()
    Qp = fields.quantum_potential(kind, p, ex, cf, x[:, 0], x[:, 1], x[:, 2], times + dt)
    Qm = fields.quantum_potential(kind, p, ex, cf, x[:, 0], x[:, 1], x[:, 2], times - dt)
    dE = (E[:, 2] - E[:, 0]) / (2 * dt)
    dQ = (Qp - Qm) / (2 * dt)
    return np.abs(dE - dQ)
