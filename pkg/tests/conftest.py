import pytest

from qtrack import model

_VERDICTS = {}


@pytest.fixture(scope="session")
def params():
    return model.table_s2()


@pytest.fixture(scope="session")
def rates(params):
    return model.derive_rates(params)


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  [{number:2d}] {title}: {detail}"
        _VERDICTS[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[number])
