import pytest

CRITERIA: list[str] = []


@pytest.fixture
def record_criterion():
    """Collects one PASS/FAIL line per acceptance criterion for the summary."""

    def record(number, passed, detail):
        line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        CRITERIA.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)
