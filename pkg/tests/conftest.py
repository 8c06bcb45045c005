import pytest

RESULTS: dict[int, tuple[str, str]] = {}
NOTES: list[str] = []


@pytest.fixture
def record():
    """``record(n, ok, detail)`` stores one acceptance outcome for the summary."""

    def _record(n: int, ok: bool, detail: str) -> bool:
        RESULTS[n] = ("PASS" if ok else "FAIL", detail)
        return ok

    return _record


@pytest.fixture
def note():
    return NOTES.append


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(RESULTS):
        status, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n:2d}: {status}  {detail}")
    for line in NOTES:
        terminalreporter.write_line(f"info: {line}")
