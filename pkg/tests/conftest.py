import numpy as np
import pytest

from smallmort import io
from smallmort.config import data_path

# Acceptance results collected by tests/test_acceptance.py and echoed at the end of the run.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def standard_path():
    return data_path("standard.csv")


@pytest.fixture(scope="session")
def reference_path():
    return data_path("reference.csv")


@pytest.fixture(scope="session")
def toy_path():
    return data_path("toy_dataset.csv")


@pytest.fixture(scope="session")
def standard(standard_path):
    return io.read_standard(standard_path, "both")


@pytest.fixture(scope="session")
def reference(reference_path):
    return io.read_reference(reference_path)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
