import numpy as np
import pytest
from hypothesis import settings

from abgauge.modes import ModeGrid, default_spacing
from abgauge.sources import CircularLoop, FiniteSolenoid

settings.register_profile("abgauge", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("abgauge")


@pytest.fixture(scope="session")
def loop_x():
    """Circular loop of radius 0.5 in the yz plane."""
    return CircularLoop(0.5, normal=(1.0, 0.0, 0.0))


@pytest.fixture(scope="session")
def solenoid_x():
    return FiniteSolenoid(0.5, 2.0, 5.0, axis=(1.0, 0.0, 0.0), winding="rings")


@pytest.fixture(scope="session")
def small_grid(loop_x):
    """Coarse symmetric grid, cheap enough for identity checks."""
    return ModeGrid(default_spacing(loop_x), 16, loop_x, level=2)


@pytest.fixture(scope="session")
def grid48(loop_x):
    return ModeGrid(default_spacing(loop_x), 48, loop_x, level=3)


@pytest.fixture
def rng():
    return np.random.default_rng(20260101)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
