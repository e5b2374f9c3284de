"""Randomized invariants spanning several modules."""

import math

import numpy as np
import pytest
from hypothesis import assume, example, given, settings, strategies as st

from qpd import (
    CoherentState1D, FreeGaussian1D, IntegratorSettings, ParticleState, StepEigenstate1D, classify,
    evaluate, integrate_qpd, radial_trajectory,
)
from qpd import _jit
from qpd.central import center_time
from qpd.oracles import free_gaussian_trajectory

slow = settings(max_examples=25, deadline=None)


@settings(max_examples=60, deadline=None)
@given(E=st.floats(0.01, 0.99))
def test_step_amplitude_is_continuously_differentiable(E):
    model = StepEigenstate1D(E, 1.0)
    left, right = evaluate(model, -1e-12, 0.0), evaluate(model, 1e-12, 0.0)
    assert float(left.R) == pytest.approx(float(right.R), rel=1e-9, abs=1e-12)
    assert float(left.gradR[0]) == pytest.approx(float(right.gradR[0]), rel=1e-9, abs=1e-12)


@slow
@given(X0=st.floats(-3, 3), V0=st.floats(-3, 3), T=st.floats(0.5, 20))
def test_free_trajectories_follow_closed_form(compiled_kernels, X0, V0, T):
    rec = integrate_qpd(FreeGaussian1D(), None, ParticleState([X0], [V0]),
                        IntegratorSettings(t_end=T, n_samples=11, escape_radius=math.inf))
    exact = np.array([free_gaussian_trajectory(X0, V0, t) for t in rec.t])
    assert np.max(np.abs(rec.position[:, 0] - exact) / np.maximum(1, np.abs(exact))) < 1e-6


@pytest.mark.skipif(not _jit.HAVE_NUMBA, reason="numba not installed")
@slow
@given(X0=st.floats(-2, 2), V0=st.floats(-1, 1))
def test_backends_agree_on_random_starts(compiled_kernels, X0, V0):
    model = CoherentState1D(0.7)
    base = dict(t_end=6.0, n_samples=13, escape_radius=math.inf, rtol=1e-10, atol=1e-10)
    a = integrate_qpd(model, None, ParticleState([X0], [V0]), IntegratorSettings(backend="numba", **base))
    b = integrate_qpd(model, None, ParticleState([X0], [V0]), IntegratorSettings(backend="numpy", **base))
    assert np.allclose(a.x, b.x, rtol=0, atol=1e-11)


@given(r0=st.floats(0.1, 5), rdot0=st.floats(-3, 3), E=st.floats(-3, 3), m0=st.floats(0.2, 5))
@example(r0=0.25, rdot0=0.0, E=5e-324, m0=1.0)
def test_closed_form_radius_respects_classification(r0, rdot0, E, m0):
    C = r0 * r0 * (E - 0.5 * m0 * rdot0 ** 2)
    reg = classify(E, C)
    tc = center_time(r0, rdot0, E, m0)
    t_stop = min(tc * (1 - 1e-6), 50.0) if tc is not None else 50.0
    assume(t_stop > 0)
    r = radial_trajectory(r0, rdot0, E, m0, np.linspace(0, t_stop, 200))
    if reg.turning_radius is not None and reg.bounded:
        assert np.all(r <= reg.turning_radius * (1 + 1e-9))
    if reg.turning_radius is not None and not reg.bounded:
        assert np.all(r >= reg.turning_radius * (1 - 1e-9))


@slow
@given(X0=st.floats(-1.5, 1.5), V0=st.floats(-0.5, 0.5))
@example(X0=0.0, V0=1e-15)
def test_coherent_motion_is_time_reversible(compiled_kernels, X0, V0):
    # the coherent force -a cos t is even in t, so reversing from t = 0 retraces t -> -t
    model = CoherentState1D(1.0)
    s = IntegratorSettings(t_end=3.0, n_samples=4, escape_radius=math.inf, rtol=1e-11, atol=1e-11)
    fwd = integrate_qpd(model, None, ParticleState([X0], [V0]), s)
    back = integrate_qpd(model, None, ParticleState([X0], [-V0]), s)
    mirror = X0 - V0 * fwd.t + (np.cos(fwd.t) - 1)
    assert np.allclose(back.position[:, 0], mirror, atol=1e-8)
