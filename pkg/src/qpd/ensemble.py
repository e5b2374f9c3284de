"""Seeded ensembles: Born-rule positions, perturbed guidance velocities, parallel evolution."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.integrate import cumulative_trapezoid
from scipy.interpolate import PchipInterpolator

from . import fields, stepper
from .dynamics import ParticleState, dbb_initial_velocity, run_kernel
from .errors import DomainError, NonNormalizableError, ValidationError
from .potential import ClassicalPotential

STATS_COLUMNS = ("t", "mean_x", "mean_y", "mean_z", "std", "frac_escaped", "frac_stopped", "n_alive")
INVERSE_CDF_KNOTS = 10_000


@dataclass(frozen=True)
class DbbExact:
    """Velocities equal to the guidance field."""


@dataclass(frozen=True)
class GaussianPerturbation:
    """Guidance velocity plus v0 plus independent N(0, sigma_tilde^2) per component."""

    v0: float | tuple = 0.0
    sigma_tilde: float = 0.0

    def __post_init__(self):
        if not self.sigma_tilde >= 0:
            raise ValidationError("sigma_tilde must be non-negative")
        if np.ndim(self.v0):
            object.__setattr__(self, "v0", tuple(float(v) for v in self.v0))


@dataclass(frozen=True)
class EnsembleSpec:
    n: int
    velocity_law: DbbExact | GaussianPerturbation = field(default_factory=DbbExact)
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValidationError("ensemble size must be at least 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


def particle_rng(seed, index):
    """Counter-based stream for particle ``index``; independent of scheduling."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(index)]))


def _inverse_cdf(grid, density):
    cdf = cumulative_trapezoid(density, grid, initial=0.0)
    cdf /= cdf[-1]
    cdf, keep = np.unique(cdf, return_index=True)
    return PchipInterpolator(cdf, grid[keep])


class _PositionSampler:
    """Draws x ~ |psi(., t0)|^2 with one generator per particle."""

    def __init__(self, model, t0):
        if not model.normalizable:
            raise NonNormalizableError(f"{type(model).__name__} is not normalizable; Born-rule sampling is undefined")
        self.model = model
        self.t0 = t0
        kind = model.kind_code
        if kind == fields.HARMONIC:
            half = math.sqrt(2 * model.n + 1) + 9.0
            grid = np.linspace(-half, half, INVERSE_CDF_KNOTS)
            self.icdf = _inverse_cdf(grid, np.abs(model.psi(grid, t0)) ** 2)
        elif kind == fields.CENTRAL:
            beta = model.radial.beta
            r_max = (2 * model.l + 2 + 60) / (2 * beta)
            grid = np.linspace(0.0, r_max, INVERSE_CDF_KNOTS)
            self.icdf = _inverse_cdf(grid, (model.radial(grid) * grid) ** 2)
            self.ang_bound = (2 * model.l + 1) / (4 * math.pi)

    def draw(self, rng):
        model, kind = self.model, self.model.kind_code
        if kind == fields.FREE:
            return np.array([math.sqrt(1.0 + self.t0 ** 2) * rng.standard_normal()])
        if kind == fields.COHERENT:
            return np.array([model.a * math.cos(self.t0) + math.sqrt(0.5) * rng.standard_normal()])
        if kind == fields.HARMONIC:
            return np.array([float(self.icdf(rng.random()))])
        r = float(self.icdf(rng.random()))
        while True:
            cos_t = 2.0 * rng.random() - 1.0
            phi = 2.0 * math.pi * rng.random()
            theta = math.acos(cos_t)
            if rng.random() * self.ang_bound <= abs(model.angular(theta, phi)) ** 2:
                break
        s = math.sin(theta)
        return np.array([r * s * math.cos(phi), r * s * math.sin(phi), r * cos_t])


def sample_initial(spec, model, t0=0.0):
    """Particle states with positions from |psi(., t0)|^2 and velocities from ``spec.velocity_law``."""
    sampler = _PositionSampler(model, t0)
    law = spec.velocity_law
    out = []
    for i in range(int(spec.n)):
        rng = particle_rng(spec.seed, i)
        x = sampler.draw(rng)
        v = dbb_initial_velocity(model, x, t0)
        if isinstance(law, GaussianPerturbation):
            v = v + np.broadcast_to(np.asarray(law.v0, dtype=float), v.shape)
            if law.sigma_tilde > 0:
                v = v + law.sigma_tilde * rng.standard_normal(v.shape)
        out.append(ParticleState(x, v, t0))
    return out


@dataclass
class EnsembleStats:
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    frac_escaped: np.ndarray
    frac_stopped: np.ndarray
    n_alive: np.ndarray
    positions: np.ndarray
    n: int
    dim: int = 1

    def csv_text(self):
        buf = io.StringIO()
        buf.write(",".join(STATS_COLUMNS) + "\n")
        for k in range(self.t.size):
            row = [self.t[k], *self.mean[k], self.std[k], self.frac_escaped[k], self.frac_stopped[k]]
            buf.write(",".join(repr(float(v)) for v in row) + f",{int(self.n_alive[k])}\n")
        return buf.getvalue()

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def alive_positions(self, k):
        pos = self.positions[:, k]
        return pos[np.all(np.isfinite(pos), axis=1)]


def evolve_ensemble(states, model, pot, settings, sample_times=None):
    """Integrate every state under QPD and aggregate statistics at ``sample_times``.

    Escaped and stopped trajectories drop out of mean and std from their event
    time on but are counted in the fractions. Reductions run in particle order.
    """
    if pot is None:
        pot = ClassicalPotential.for_model(model)
    pot.check_pairing(model)
    if not states:
        raise ValidationError("empty ensemble")
    t0 = states[0].t
    if any(s.t != t0 for s in states):
        raise ValidationError("ensemble states must share a start time")
    ts = np.asarray(sample_times if sample_times is not None else settings.times(t0), dtype=float)
    Y0 = np.stack([s.padded() for s in states])
    OUT, EV, _ = run_kernel(model, stepper.QPD, Y0, t0, ts, settings)
    dim = model.dim
    n = len(states)
    positions = OUT[:, :, :dim]

    codes = EV[:, :, 0]
    times = np.where(codes > 0, EV[:, :, 1], np.inf)
    esc_t = np.min(np.where(codes == stepper.EV_ESCAPED, times, np.inf), axis=1)
    stop_mask = (codes == stepper.EV_NODE) | (codes == stepper.EV_CENTER) | (codes == stepper.EV_FAILURE)
    stop_t = np.min(np.where(stop_mask, times, np.inf), axis=1)

    S = ts.size
    mean = np.zeros((S, 3))
    std = np.full(S, np.nan)
    n_alive = np.zeros(S, dtype=np.int64)
    for k in range(S):
        alive = np.all(np.isfinite(positions[:, k]), axis=1)
        pts = positions[alive, k]
        n_alive[k] = pts.shape[0]
        if pts.shape[0]:
            mean[k, :dim] = pts.mean(axis=0)
        if pts.shape[0] > 1:
            std[k] = math.sqrt(float(np.sum(pts.var(axis=0, ddof=1))))
    frac_escaped = np.array([np.count_nonzero(esc_t <= t) / n for t in ts])
    frac_stopped = np.array([np.count_nonzero(stop_t <= t) / n for t in ts])
    return EnsembleStats(ts, mean, std, frac_escaped, frac_stopped, n_alive, positions, n, dim)


def gaussian_prediction(v0, sigma_tilde, t):
    """Mean and std of the free-packet position distribution for Gaussian initial velocities."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("prediction defined for t >= 0")
    width = np.sqrt(1.0 + t * t)
    at = np.arctan(t)
    mean = v0 * width * at
    std = np.sqrt((1.0 + t * t) * (1.0 + sigma_tilde ** 2 * at * at))
    if mean.ndim == 0:
        return float(mean), float(std)
    return mean, std


def monte_carlo_bands(std, n, k=3.0):
    """k-sigma sampling bands for the sample mean and sample std of n normal draws."""
    return k * std / math.sqrt(n), k * std / math.sqrt(2.0 * (n - 1))


def born_cdf(model, t):
    """CDF of |psi(., t)|^2 for one-dimensional normalizable models."""
    kind = model.kind_code
    if kind == fields.FREE:
        return stats.norm(0.0, math.sqrt(1.0 + t * t)).cdf
    if kind == fields.COHERENT:
        return stats.norm(model.a * math.cos(t), math.sqrt(0.5)).cdf
    if kind == fields.HARMONIC:
        half = math.sqrt(2 * model.n + 1) + 9.0
        grid = np.linspace(-half, half, INVERSE_CDF_KNOTS)
        cdf = cumulative_trapezoid(np.abs(model.psi(grid, t)) ** 2, grid, initial=0.0)
        cdf /= cdf[-1]
        return lambda x: np.interp(x, grid, cdf)
    raise ValidationError(f"no one-dimensional Born CDF for {type(model).__name__}")


@dataclass(frozen=True)
class KSResult:
    statistic: float
    critical: float
    n: int

    @property
    def passed(self):
        return self.statistic < self.critical


def ks_against_born(positions, model, t, alpha=0.01):
    """Kolmogorov-Smirnov distance of 1D samples from |psi(., t)|^2 and its critical value."""
    x = np.asarray(positions, dtype=float).ravel()
    x = x[np.isfinite(x)]
    d = stats.kstest(x, born_cdf(model, t)).statistic
    return KSResult(float(d), float(stats.kstwo.ppf(1.0 - alpha, x.size)), x.size)
