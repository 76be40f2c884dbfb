import numpy as np
import pytest

from spde_hmm.fast import FastProcessModel
from spde_hmm.forcing import CovarianceSpec
from spde_hmm.spectral import eigenbasis


@pytest.fixture
def basis8():
    return eigenbasis(8)


@pytest.fixture
def basis32():
    return eigenbasis(32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def white_model(basis8):
    return FastProcessModel(CovarianceSpec("white"), basis8)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
