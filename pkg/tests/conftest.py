import pytest

ACCEPTANCE_LINES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES, key=lambda k: (int(k.rstrip("ab")), k)):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture
def report():
    def _report(key: str, ok: bool, text: str):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {key}: {text}"
        ACCEPTANCE_LINES[key] = line
        print(line)
        return ok

    return _report
