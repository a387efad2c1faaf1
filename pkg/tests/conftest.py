import random

import pytest

from lightcom import pcdd


@pytest.fixture(scope="session")
def toy_keys():
    return pcdd.keygen_from_primes(5, 7, insecure=True)


@pytest.fixture(scope="session")
def keys512():
    return pcdd.keygen(512, seed=1)


@pytest.fixture(scope="session")
def keys128():
    return pcdd.keygen(128, seed=7)


@pytest.fixture
def rng():
    return random.Random(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
