"""Shared test plumbing: a per-criterion result ledger for the acceptance
suite, printed as one line per criterion at the end of the run."""

_CRITERION_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str):
    status = "PASS" if passed else "FAIL"
    _CRITERION_LINES[number] = f"[{status}] criterion {number:2d}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[number])
