import numpy as np
import pytest

from inhomdiff.model import DiffusionProfile, GaussianWavepacket, Grid1D, HarmonicPotential

_criteria = []


@pytest.fixture(scope="session")
def grid():
    return Grid1D()


@pytest.fixture
def criterion():
    """Record one acceptance line; the summary prints at the end of the session."""

    def record(label, ok, detail=""):
        _criteria.append((label, bool(ok), detail))
        assert ok, f"{label}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, ok, detail in _criteria:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")


def ou_mean(eps0, t, k=1.0, d0=1.0):
    return eps0 * np.exp(-d0 * k * np.asarray(t))
