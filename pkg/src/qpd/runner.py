"""Execute scenario configs: build models, run the requested mode, write CSVs and a report."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import central, ensemble, oracles
from .config import render
from .dynamics import (
    IntegratorSettings, ParticleState, constraint_residual, dbb_initial_velocity,
    integrate_dbb, integrate_qpd, invariant_drift,
)
from .errors import NodeError, QPDError, ValidationError
from .potential import ClassicalPotential, eigen_identity_residual, quantum_potential, quantum_potential_fd
from .wavemodels import (
    CentralSuperposition, CoherentState1D, FreeGaussian1D, HarmonicEigenstate1D, HydrogenLike,
    StepEigenstate1D, amplitude,
)

REGIME_COLUMNS = ("Etilde", "C", "regime", "turning_radius")
RADIAL_COLUMNS = ("case", "rdot0", "C", "t", "r", "r_closed")


@dataclass
class RunReport:
    """Ordered key: value lines plus pass/fail bookkeeping."""

    entries: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    files: list = field(default_factory=list)

    def add(self, key, value):
        self.entries.append((key, value))

    def check(self, name, value, limit, below=True):
        ok = bool(value < limit) if below else bool(value > limit)
        self.add(f"check.{name}", f"{_fmt(value)} {'<' if below else '>'} {_fmt(limit)} {'PASS' if ok else 'FAIL'}")
        if not ok:
            self.failures.append(name)
        return ok

    @property
    def exit_status(self):
        return 1 if (self.failures or self.errors) else 0

    def text(self):
        lines = [f"{k}: {v}" for k, v in self.entries]
        lines += [f"file: {f}" for f in self.files]
        lines += [f"error: {e}" for e in self.errors]
        lines.append(f"status: {'ok' if self.exit_status == 0 else 'failed'}")
        return "\n".join(lines) + "\n"


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------- builders


def build_model(cfg):
    m = cfg.model
    kind = m["kind"]
    if kind == "free":
        return FreeGaussian1D()
    if kind == "coherent":
        return CoherentState1D(m["a"])
    if kind == "harmonic":
        return HarmonicEigenstate1D(m["n"])
    if kind == "step":
        return StepEigenstate1D(m["E"], m["V"])
    l = m["l"]
    radial = HydrogenLike(m["radial_n"] if m["radial_n"] is not None else l + 1, l, m["a0"])
    coeffs = m["coefficients"]
    if coeffs is None:
        return CentralSuperposition.pure(l, l, radial=radial, hbar=m["hbar"], m0=m["m0"])
    return CentralSuperposition(l, coeffs, radial=radial, hbar=m["hbar"], m0=m["m0"])


def build_potential(cfg, model):
    p = cfg.potential
    if p["kind"] == "auto":
        return ClassicalPotential.for_model(model)
    pot = ClassicalPotential(p["kind"], height=p["height"], strength=p["strength"])
    pot.check_pairing(model)
    return pot


def build_settings(cfg):
    r = cfg.run
    return IntegratorSettings(
        t_end=r["t_end"], rtol=r["rtol"], atol=r["atol"], max_step=r["max_step"],
        sample_times=r["sample_times"], n_samples=r["n_samples"], escape_radius=r["escape_radius"],
        scaled_escape=r["scaled_escape"], stop_on_escape=r["stop_on_escape"], node_tol=r["node_tol"],
        center_radius=r["center_radius"], max_steps=r["max_steps"],
        backend=None if r["backend"] == "auto" else r["backend"],
    )


def initial_states(cfg, model):
    r = cfg.run
    d = model.dim
    out = []
    for i, row in enumerate(r["initial"]):
        if r["dbb_velocity"] or r["mode"] == "dbb":
            if len(row) != d:
                raise ValidationError(f"run.initial row {i} needs {d} position components")
            x = np.array(row)
            out.append(ParticleState(x, dbb_initial_velocity(model, x, r["t0"]), r["t0"]))
        else:
            if len(row) != 2 * d:
                raise ValidationError(f"run.initial row {i} needs {d} position and {d} velocity components")
            out.append(ParticleState(np.array(row[:d]), np.array(row[d:]), r["t0"]))
    return out


def ensemble_spec(cfg):
    r = cfg.run
    law = ensemble.DbbExact() if r["velocity_law"] == "dbb" else ensemble.GaussianPerturbation(
        r["v0"][0] if len(r["v0"]) == 1 else r["v0"], r["sigma_tilde"])
    return ensemble.EnsembleSpec(r["n"], law, r["seed"])


def oracle_deviation(model, record, init):
    """max |x - X_exact| / max(1, |X_exact|) for models with closed-form trajectories, else None."""
    if isinstance(model, FreeGaussian1D):
        exact = np.array([oracles.free_gaussian_trajectory(init.x[0], init.v[0], t) for t in record.t])
    elif isinstance(model, CoherentState1D):
        exact = np.array([oracles.coherent_trajectory(init.x[0], init.v[0], model.a, t) for t in record.t])
    else:
        return None
    return float(np.max(np.abs(record.x[:, 0] - exact) / np.maximum(1.0, np.abs(exact))))


def _path(cfg, out_dir, suffix):
    directory = out_dir if out_dir is not None else cfg.output["directory"]
    os.makedirs(directory, exist_ok=True)
    return os.path.join(directory, f"{cfg.output['stem']}{suffix}")


def _event_summary(record):
    return "; ".join(f"{ev.kind}@{ev.t!r}" for ev in record.events)


# ---------------------------------------------------------------- modes


def _central_drifts(model, record):
    f_at = central.angular_function(model)
    inv = [central.invariants_of(ParticleState(x, v), f_at, model.m0) for x, v in zip(record.x, record.v)]
    return invariant_drift([i.Etilde for i in inv]), invariant_drift([i.C for i in inv]), inv[0]


def _run_trajectories(cfg, report, out_dir, checking):
    model = build_model(cfg)
    build_potential(cfg, model)
    settings = build_settings(cfg)
    dbb_mode = cfg.run["mode"] == "dbb"
    states = initial_states(cfg, model)
    for i, init in enumerate(states):
        key = f"trajectory.{i}"
        report.add(f"{key}.x0", " ".join(_fmt(float(v)) for v in init.x))
        report.add(f"{key}.v0", " ".join(_fmt(float(v)) for v in init.v))
        if dbb_mode:
            rec = integrate_dbb(model, init.x, init.t, settings, raise_on_failure=False)
        else:
            rec = integrate_qpd(model, None, init, settings, raise_on_failure=False)
        report.add(f"{key}.events", _event_summary(rec))
        report.add(f"{key}.samples", len(rec))
        last = rec.final_event
        if last is not None and last.kind == "failure":
            report.errors.append(f"trajectory {i}: integrator failed at t = {_fmt(last.t)}")
        if not checking:
            path = _path(cfg, out_dir, f"_{i}.csv")
            rec.to_csv(path)
            report.files.append(path)
        dev = oracle_deviation(model, rec, init)
        if dev is not None:
            report.add(f"{key}.oracle_deviation", _fmt(dev))
            if checking:
                report.check(f"{key}.oracle", dev, 1e-6)
        if not dbb_mode:
            residual = float(np.nanmax(rec.residual))
            report.add(f"{key}.max_constraint_residual", _fmt(residual))
            on_field = constraint_residual(init, model) < 1e-12
            if checking and on_field:
                report.check(f"{key}.constraint_residual", residual, 1e-6)
                ref = integrate_dbb(model, init.x, init.t, replace(settings, sample_times=tuple(rec.t)),
                                    raise_on_failure=False)
                n = min(len(ref), len(rec))
                gap = float(np.max(np.abs(ref.x[:n] - rec.x[:n])))
                report.check(f"{key}.dbb_coincidence", gap, 1e-6)
            if model.is_eigenstate and not isinstance(model, CentralSuperposition):
                drift = invariant_drift(rec.Etilde)
                report.add(f"{key}.etilde_drift", _fmt(drift))
                if checking:
                    report.check(f"{key}.etilde_drift", drift, 1e-7)
            if isinstance(model, CentralSuperposition) and len(rec):
                dE, dC, inv0 = _central_drifts(model, rec)
                regime = inv0.regime()
                report.add(f"{key}.etilde", _fmt(inv0.Etilde))
                report.add(f"{key}.C", _fmt(inv0.C))
                report.add(f"{key}.regime", regime.name)
                report.add(f"{key}.etilde_drift", _fmt(dE))
                report.add(f"{key}.C_drift", _fmt(dC))
                if checking:
                    report.check(f"{key}.etilde_drift", dE, 1e-6)
                    report.check(f"{key}.C_drift", dC, 1e-6)


def _run_ensemble(cfg, report, out_dir, checking):
    model = build_model(cfg)
    pot = build_potential(cfg, model)
    settings = build_settings(cfg)
    spec = ensemble_spec(cfg)
    states = ensemble.sample_initial(spec, model, cfg.run["t0"])
    stats = ensemble.evolve_ensemble(states, model, pot, settings)
    report.add("ensemble.n", spec.n)
    report.add("ensemble.seed", spec.seed)
    report.add("ensemble.final_frac_escaped", _fmt(float(stats.frac_escaped[-1])))
    report.add("ensemble.final_frac_stopped", _fmt(float(stats.frac_stopped[-1])))
    if not checking:
        path = _path(cfg, out_dir, "_ensemble.csv")
        stats.to_csv(path)
        report.files.append(path)
    law = spec.velocity_law
    if isinstance(model, FreeGaussian1D) and np.ndim(getattr(law, "v0", 0.0)) == 0:
        v0 = getattr(law, "v0", 0.0)
        sig = getattr(law, "sigma_tilde", 0.0)
        worst_mean = worst_std = 0.0
        for k, t in enumerate(stats.t):
            mu, sd = ensemble.gaussian_prediction(v0, sig, t)
            band_mean, band_std = ensemble.monte_carlo_bands(sd, max(int(stats.n_alive[k]), 2))
            worst_mean = max(worst_mean, abs(stats.mean[k, 0] - mu) / band_mean)
            worst_std = max(worst_std, abs(stats.std[k] - sd) / band_std)
        report.add("ensemble.mean_deviation_in_bands", _fmt(worst_mean))
        report.add("ensemble.std_deviation_in_bands", _fmt(worst_std))
        if checking:
            report.check("ensemble.mean_within_3sigma", worst_mean, 1.0)
            report.check("ensemble.std_within_3sigma", worst_std, 1.0)
    if model.dim == 1 and isinstance(law, ensemble.DbbExact):
        worst = 0.0
        for k, t in enumerate(stats.t):
            ks = ensemble.ks_against_born(stats.alive_positions(k), model, t)
            worst = max(worst, ks.statistic / ks.critical)
            report.add(f"ensemble.ks.{k}", f"t={t!r} D={ks.statistic!r} critical={ks.critical!r}")
        if checking:
            report.check("ensemble.ks_over_critical", worst, 1.0)


def regime_rows(points):
    rows = []
    for E, C in points:
        reg = central.classify(E, C)
        rows.append((E, C, reg.name, reg.turning_radius))
    return rows


def write_regimes(path, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(REGIME_COLUMNS) + "\n")
        for E, C, name, tr in rows:
            fh.write(f"{float(E)!r},{float(C)!r},{name},{'' if tr is None else repr(float(tr))}\n")


def sweep_points(etilde_range, c_range, grid):
    """Grid over the (Etilde, C) plane; values within 1e-12 of the span from zero snap to the axis."""
    pts = []
    Es = np.linspace(*etilde_range, grid)
    Cs = np.linspace(*c_range, grid)
    Es[np.abs(Es) < 1e-12 * max(1.0, np.ptp(Es))] = 0.0
    Cs[np.abs(Cs) < 1e-12 * max(1.0, np.ptp(Cs))] = 0.0
    for E in Es:
        for C in Cs:
            pts.append((float(E), float(C)))
    return pts


def _run_classify(cfg, report, out_dir, points):
    rows = regime_rows(points)
    for i, (E, C, name, tr) in enumerate(rows):
        report.add(f"regime.{i}", f"Etilde={E!r} C={C!r} {name}" + ("" if tr is None else f" turning_radius={tr!r}"))
    path = _path(cfg, out_dir, "_regimes.csv")
    write_regimes(path, rows)
    report.files.append(path)


def _run_radial(cfg, report, out_dir):
    r = cfg.run
    settings = build_settings(cfg)
    r0, m0 = r["r0"], r["m0"]
    lines = [",".join(RADIAL_COLUMNS)]
    for i, (rdot0, C) in enumerate(r["cases"]):
        Et = 0.5 * m0 * rdot0 ** 2 + C / r0 ** 2
        rec = central.integrate_radial(r0, rdot0, C, m0, settings)
        reg = central.classify(Et, C)
        ts = rec.t
        tc = central.center_time(r0, rdot0, Et, m0)
        if tc is not None:
            ts = ts[ts < tc]
        closed = np.atleast_1d(central.radial_trajectory(r0, rdot0, Et, m0, ts)) if ts.size else np.array([])
        n = closed.size
        dev = float(np.max(np.abs(rec.x[:n, 0] / closed - 1.0))) if n else math.nan
        report.add(f"radial.{i}", f"rdot0={rdot0!r} C={C!r} Etilde={Et!r} regime={reg.name} events={_event_summary(rec)}")
        report.add(f"radial.{i}.closed_form_deviation", _fmt(dev))
        for k in range(n):
            lines.append(f"{i},{rdot0!r},{C!r},{float(rec.t[k])!r},{float(rec.x[k, 0])!r},{float(closed[k])!r}")
    path = _path(cfg, out_dir, "_radial.csv")
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    report.files.append(path)


def field_checks(model, report):
    """Eigenstate identity and closed-form vs finite-difference Q over a fixed grid."""
    if model.dim == 1:
        half = 5.0 if isinstance(model, StepEigenstate1D) else 6.0
        pts = np.linspace(-half, half, 1000) + 1e-3 * math.pi
    else:
        ext = 2.0 * float(model.params[9])
        axis = np.linspace(-ext, ext, 10) + 1e-2 * math.e
        pts = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1).reshape(-1, 3)
    R = np.abs(amplitude(model, pts, 0.0))
    pts = pts[R > 1e-3 * model.amplitude_scale]
    report.add("grid.points", len(pts))
    if model.is_eigenstate:
        report.check("eigen_identity", float(np.max(eigen_identity_residual(model, pts))), 1e-7)
    Q = quantum_potential(model, pts, 0.0)
    errs = {}
    for h in (1e-3, 1e-4):
        vals = []
        for x, q in zip(pts, Q):
            try:
                vals.append(abs(quantum_potential_fd(model, x, 0.0, h=h) - q))
            except NodeError:
                vals.append(math.nan)
        errs[h] = np.asarray(vals)
    ok = np.isfinite(errs[1e-3]) & np.isfinite(errs[1e-4])
    report.check("fd_q_error_h1e-4", float(np.max(errs[1e-4][ok])), 1e-6)
    ratio = float(np.max(errs[1e-3][ok]) / np.max(errs[1e-4][ok]))
    report.check("fd_q_convergence_ratio", ratio, 50.0, below=False)


# ---------------------------------------------------------------- entry points


def run_scenario(cfg, out_dir=None):
    """Execute ``cfg.run.mode``; returns a RunReport and writes CSV artifacts."""
    report = RunReport()
    mode = cfg.run["mode"]
    report.add("mode", mode)
    report.add("config", render(cfg).replace("\n", " | ").strip(" |"))
    try:
        if mode == "check":
            return check_scenario(cfg, out_dir)
        if mode in ("trajectory", "dbb"):
            _run_trajectories(cfg, report, out_dir, checking=False)
        elif mode == "ensemble":
            _run_ensemble(cfg, report, out_dir, checking=False)
        elif mode == "classify":
            _run_classify(cfg, report, out_dir, cfg.run["points"])
        elif mode == "sweep":
            _run_classify(cfg, report, out_dir, sweep_points(cfg.run["etilde_range"], cfg.run["c_range"], cfg.run["grid"]))
        elif mode == "radial":
            _run_radial(cfg, report, out_dir)
    except QPDError as exc:
        report.errors.append(f"{type(exc).__name__}: {exc}")
    return report


def check_scenario(cfg, out_dir=None):
    """Invariant suite for the configured model and run; failures set a nonzero exit status."""
    report = RunReport()
    report.add("mode", "check")
    try:
        if cfg.model:
            model = build_model(cfg)
            build_potential(cfg, model)
            field_checks(model, report)
        mode = cfg.run["mode"]
        if mode in ("trajectory", "dbb") or (mode == "check" and cfg.run["initial"]):
            _run_trajectories(cfg, report, out_dir, checking=True)
        elif mode == "ensemble":
            _run_ensemble(cfg, report, out_dir, checking=True)
        elif mode in ("classify", "sweep"):
            pts = cfg.run["points"] if mode == "classify" else sweep_points(
                cfg.run["etilde_range"], cfg.run["c_range"], cfg.run["grid"])
            report.add("regimes.count", len(pts))
    except QPDError as exc:
        report.errors.append(f"{type(exc).__name__}: {exc}")
    return report


def write_report(report, cfg, out_dir=None):
    path = _path(cfg, out_dir, "_report.txt")
    with open(path, "w", newline="") as fh:
        fh.write(report.text())
    return path
