"""Shared fixtures and the acceptance summary printed at the end of a run."""
import pytest

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store ``(criterion, passed, detail)`` for the end-of-run summary."""
    def _record(number: int, passed: bool, detail: str):
        if number in _ACCEPTANCE:      # parametrized criteria: all cases must pass
            prev_ok, prev = _ACCEPTANCE[number]
            passed, detail = prev_ok and passed, f"{prev}; {detail}"
        _ACCEPTANCE[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        passed, detail = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
