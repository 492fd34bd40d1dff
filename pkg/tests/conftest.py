import numpy as np
import pytest

from tfkit.signal import SampledSignal

# Acceptance results collected by tests/test_acceptance.py, printed at the end
# of the session so that `pytest -v` output carries one line per criterion.
ACCEPTANCE_LINES = {}


def trig_signal(rng, n=256, spacing=0.25, kmax=8, modes=5, exclude=()):
    """Random trigonometric polynomial with integer modes ``|k| <= kmax`` over the period."""
    L = n * spacing
    pool = np.array([k for k in range(-kmax, kmax + 1) if k not in exclude])
    ks = np.sort(rng.choice(pool, size=min(modes, pool.size), replace=False))
    c = rng.normal(size=ks.size) + 1j * rng.normal(size=ks.size)
    return SampledSignal.from_spectrum(ks / L, c, n, spacing)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    # under importlib mode the tests import a separate copy of this module
    import conftest

    lines = conftest.ACCEPTANCE_LINES
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
