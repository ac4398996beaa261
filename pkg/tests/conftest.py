import pytest

from hopump.fock import Sector
from hopump.lattice import build_lattice

_VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    _VERDICTS.append(line)
    print(line)


@pytest.fixture
def verdict():
    return record_verdict


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def lat4():
    return build_lattice(4)


@pytest.fixture(scope="session")
def half_filled(lat4):
    return Sector(16, 8)


@pytest.fixture(scope="session")
def lat2():
    return build_lattice(2)
