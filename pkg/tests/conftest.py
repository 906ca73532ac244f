import numpy as np
import pytest

from procdmn.datagen import PhaseSampler, online_constants, sample_pairs
from procdmn.online import LeafMaterials


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def phase_pairs():
    return sample_pairs(PhaseSampler(seed=7), 50)


@pytest.fixture(scope="session")
def constants():
    return online_constants()


@pytest.fixture(scope="session")
def materials(constants):
    return LeafMaterials(constants.C_fiber, constants.C_matrix, constants.hardening)


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
