import pytest

_RESULTS = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, passed, detail)`` for the end-of-run acceptance table."""
    def record(number, title, passed, detail=""):
        _RESULTS[number] = (title, bool(passed), detail)
        print(f"[acceptance {number}] {'PASS' if passed else 'FAIL'} {title}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, ok, detail = _RESULTS[n]
        terminalreporter.write_line(f"{n:>2}. {'PASS' if ok else 'FAIL'}  {title}: {detail}")
