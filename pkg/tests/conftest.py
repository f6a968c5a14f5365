import numpy as np
import pytest

from bimeron.grid import make_grid


@pytest.fixture(scope="session")
def torus64():
    return make_grid("Torus", 64)


@pytest.fixture(scope="session")
def disk64():
    return make_grid("Disk", 64)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unit(rng, shape):
    v = rng.normal(size=shape)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# one line per acceptance criterion, printed at the end of the run
VERDICTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(VERDICTS):
        terminalreporter.write_line(VERDICTS[k])
