import pytest

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance_line():
    def emit(number: int, title: str, ok: bool, detail: str):
        line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return emit
