import numpy as np
import pytest

from beamlab.acoustics import ArrayGeometry, directivity_set
from beamlab.stft import StftParams


@pytest.fixture(scope="session")
def params():
    return StftParams()


@pytest.fixture(scope="session")
def dset():
    return directivity_set(ArrayGeometry())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE_LINES, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
