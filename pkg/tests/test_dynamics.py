import math
import os
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

from qpd import (
    CentralSuperposition, CoherentState1D, FreeGaussian1D, HarmonicEigenstate1D, IntegratorSettings,
    NodeError, ParticleState, StepFailure, ValidationError, constraint_residual, dbb_initial_velocity,
    detect_escape, integrate_dbb, integrate_qpd,
)
from qpd import _jit
from qpd.dynamics import CSV_COLUMNS

BACKENDS = ["numpy"] + (["numba"] if _jit.HAVE_NUMBA else [])


def test_state_validation():
    with pytest.raises(ValidationError):
        ParticleState([0.0, 1.0], [0.0])
    with pytest.raises(ValidationError):
        ParticleState([math.nan], [0.0])
    with pytest.raises(ValidationError):
        IntegratorSettings(t_end=1.0, rtol=0.0)
    with pytest.raises(ValidationError):
        IntegratorSettings(t_end=1.0, sample_times=(0.0, 0.5, 0.5))


def test_dbb_initial_velocity_examples():
    assert dbb_initial_velocity(CoherentState1D(1.0), [0.7])[0] == 0.0
    assert dbb_initial_velocity(FreeGaussian1D(), [-1.3])[0] == 0.0
    u = dbb_initial_velocity(CentralSuperposition.pure(1, 1), [1.0, 0.0, 0.0])
    assert np.linalg.norm(u) == pytest.approx(1.0)
    assert u[1] == pytest.approx(1.0)


def test_constraint_residual_examples():
    assert constraint_residual(ParticleState([0.0], [0.25]), CoherentState1D(1.0)) == pytest.approx(0.25)
    assert constraint_residual(ParticleState([0.0], [1.0]), FreeGaussian1D()) == pytest.approx(1.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_free_packet_from_rest(compiled_kernels, backend):
    settings = IntegratorSettings(t_end=1.0, sample_times=(0.0, 0.5, 1.0), backend=backend)
    rec = integrate_qpd(FreeGaussian1D(), None, ParticleState([1.0], [0.0]), settings)
    assert rec.position[-1, 0] == pytest.approx(1.4142136, abs=1e-6)
    assert rec.final_event.kind == "completed"
    dbb = integrate_dbb(FreeGaussian1D(), [1.0], 0.0, settings)
    assert np.allclose(dbb.position[:, 0], np.sqrt(1 + dbb.t ** 2), atol=1e-7)


def test_coherent_oscillation_and_escape(compiled_kernels):
    model = CoherentState1D(1.0)
    base = IntegratorSettings(t_end=4 * math.pi, n_samples=401, escape_radius=5.0, scaled_escape=False)
    rec = integrate_qpd(model, None, ParticleState([0.5], [0.0]), base)
    assert np.allclose(rec.position[:, 0], np.cos(rec.t) - 0.5, atol=1e-7)
    rec = integrate_qpd(model, None, ParticleState([0.0], [0.25]), base)
    assert rec.position[-1, 0] == pytest.approx(math.pi, abs=1e-6)
    assert rec.event("escaped") is None
    longer = replace(base, t_end=8 * math.pi, n_samples=801)
    rec = integrate_qpd(model, None, ParticleState([0.0], [0.25]), longer)
    ev = rec.event("escaped")
    assert ev is not None and abs(ev.x[0]) == pytest.approx(5.0, abs=1e-6)
    # the located event time solves X(t) = 5 on the closed form
    assert 0.25 * ev.t + math.cos(ev.t) - 1 == pytest.approx(5.0, abs=1e-6)
    assert rec.t[-1] <= ev.t


def test_detect_escape_on_records(compiled_kernels):
    model = CoherentState1D(1.0)
    settings = IntegratorSettings(t_end=8 * math.pi, n_samples=801, escape_radius=math.inf)
    moving = integrate_qpd(model, None, ParticleState([0.0], [0.25]), settings)
    assert detect_escape(moving, 5.0) is not None
    resting = integrate_qpd(model, None, ParticleState([0.0], [0.0]), settings)
    assert detect_escape(resting, 5.0) is None
    free = integrate_qpd(FreeGaussian1D(), None, ParticleState([0.0], [0.5]),
                         IntegratorSettings(t_end=200.0, escape_radius=math.inf))
    assert detect_escape(free, 1.0, scaled=True) is None


def test_harmonic_guidance_is_at_rest(compiled_kernels):
    rec = integrate_dbb(HarmonicEigenstate1D(0), [0.8], 0.0, IntegratorSettings(t_end=5.0))
    assert np.all(rec.position[:, 0] == 0.8)


def test_circular_guidance_orbit(compiled_kernels):
    model = CentralSuperposition.pure(1, 1)
    rec = integrate_dbb(model, [1.0, 0.0, 0.0], 0.0,
                        IntegratorSettings(t_end=10.0, rtol=1e-11, atol=1e-11, escape_radius=math.inf))
    r, theta, phi, _ = rec.spherical()
    assert np.allclose(r, 1.0, atol=1e-8)
    assert np.allclose(theta, math.pi / 2, atol=1e-8)
    # unit angular speed at r = 1
    assert np.allclose(np.unwrap(phi), rec.t, atol=1e-7)


def test_start_on_node_is_rejected():
    with pytest.raises(NodeError):
        integrate_qpd(CentralSuperposition.pure(1, 1), None, ParticleState([0.0, 0.0, 1.0], [0.0, 0.0, 0.0]),
                      IntegratorSettings(t_end=1.0))


def test_node_proximity_stops_with_event(compiled_kernels):
    # uniform motion across the node of the first excited state
    settings = IntegratorSettings(t_end=3.0, escape_radius=math.inf)
    rec = integrate_qpd(HarmonicEigenstate1D(1), None, ParticleState([-0.5], [0.5]), settings)
    assert rec.final_event.kind == "node"
    assert rec.final_event.t == pytest.approx(1.0, abs=1e-6)


def test_step_failure_is_reported(compiled_kernels):
    settings = IntegratorSettings(t_end=10.0, max_steps=5, escape_radius=math.inf)
    with pytest.raises(StepFailure) as info:
        integrate_qpd(FreeGaussian1D(), None, ParticleState([0.3], [1.0]), settings)
    assert info.value.record.final_event.kind == "failure"


def test_record_csv(compiled_kernels):
    rec = integrate_qpd(FreeGaussian1D(), None, ParticleState([0.3], [0.1]),
                        IntegratorSettings(t_end=1.0, n_samples=5))
    lines = rec.csv_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 6
    row = [float(v) for v in lines[3].split(",")]
    assert row[0] == rec.t[2] and row[1] == rec.x[2, 0]


@pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("model,x0,v0", [
    (FreeGaussian1D(), [0.4], [0.9]),
    (CoherentState1D(1.0), [0.2], [-0.3]),
    (CentralSuperposition(1, (0.3 + 0.2j, 0.5, 0.8 - 0.1j), m0=2.0), [1.2, -0.4, 0.9],
     [0.6058752000168631, -0.14858082986893084, -0.3563970345333415]),
])
def test_backends_agree(compiled_kernels, model, x0, v0):
    settings = IntegratorSettings(t_end=5.0, n_samples=51, rtol=1e-10, atol=1e-10)
    a = integrate_qpd(model, None, ParticleState(x0, v0), replace(settings, backend="numba"))
    b = integrate_qpd(model, None, ParticleState(x0, v0), replace(settings, backend="numpy"))
    assert np.allclose(a.x, b.x, rtol=0, atol=1e-10)
    assert np.allclose(a.v, b.v, rtol=0, atol=1e-10)
    assert a.steps == b.steps


def test_backend_flag():
    code = "from qpd import _jit; print(_jit.default_backend())"
    env = {**os.environ, "QPD_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    with pytest.raises(ValueError):
        _jit.resolve_backend("fortran")
