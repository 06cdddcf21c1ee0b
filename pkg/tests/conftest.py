import pytest

_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    """Store a criterion outcome for the terminal summary and echo it."""

    def record(number: int, passed: bool, detail: str) -> None:
        _CRITERIA[number] = (passed, detail)
        print(f"criterion {number}: {'PASS' if passed else 'FAIL'} {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
