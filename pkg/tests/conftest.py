import numpy as np
import pytest

from rsedit.diffusion import Blob, BlobWorld, NoiseSchedule, OracleDenoiser


@pytest.fixture(scope="session")
def sched():
    return NoiseSchedule()


@pytest.fixture
def world():
    return BlobWorld(
        {
            "edema": Blob((20.0, 20.0), 6.0, 0.4),
            "pneumothorax": Blob((44.0, 40.0), 5.0, 0.3),
            "atelectasis": Blob((30.0, 48.0), 4.0, 0.5),
        }
    )


@pytest.fixture
def denoiser(world, sched):
    return OracleDenoiser(world, sched)


@pytest.fixture
def image():
    rng = np.random.default_rng(123)
    return rng.uniform(0.2, 0.5, size=(64, 64))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
