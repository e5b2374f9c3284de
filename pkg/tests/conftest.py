import pytest

from qpd import _jit

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        prev = _OUTCOMES.get(number, (title, True, ""))
        ok = prev[1] and report.outcome == "passed"
        detail = prev[2] if report.outcome == "passed" else str(report.longrepr).splitlines()[-1][:160]
        _OUTCOMES[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, ok, detail = _OUTCOMES[number]
        line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {title}"
        if not ok and detail:
            line += f"  -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def compiled_kernels():
    """Compile (or load from cache) the numba kernels once so timings exclude JIT cost."""
    if _jit.HAVE_NUMBA and _jit.default_backend() == "numba":
        from qpd import FreeGaussian1D, IntegratorSettings, ParticleState, integrate_qpd
        from qpd.dynamics import run_kernel
        from qpd.stepper import QPD
        import numpy as np

        model = FreeGaussian1D()
        settings = IntegratorSettings(t_end=0.1, n_samples=2)
        integrate_qpd(model, None, ParticleState([0.1], [0.0]), settings)
        run_kernel(model, QPD, np.zeros((2, 6)), 0.0, settings.times(0.0), settings)
    return _jit.default_backend()
