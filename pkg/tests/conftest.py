import pytest

_LINES = []


@pytest.fixture
def verdict():
    """Record one acceptance line; shown in the terminal summary."""

    def record(number: int, ok: bool, detail: str, seconds: float, budget: float):
        ok = ok and seconds < budget
        _LINES.append((number, f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}  [{seconds:.1f}s / budget {budget:.0f}s]"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
