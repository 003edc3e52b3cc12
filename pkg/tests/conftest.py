import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Collects one ``CRITERION n: PASS|FAIL`` line per acceptance check."""

    def report(number, passed, detail):
        ACCEPTANCE_LINES.append((number, f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"))
        print(ACCEPTANCE_LINES[-1][1])

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
