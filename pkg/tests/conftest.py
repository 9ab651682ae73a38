"""Acceptance bookkeeping: one PASS/FAIL line per criterion at the end of the run."""

import time

import pytest

SUITE_BUDGET_S = 60.0

_criteria: dict[int, str] = {}
_owner: dict[str, int] = {}
_outcome: dict[int, list[bool]] = {}
_started = time.perf_counter()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): test belongs to an acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            number, title = m.args
            _criteria[number] = title
            _owner[item.nodeid] = number


def pytest_runtest_logreport(report):
    number = _owner.get(report.nodeid)
    if number is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        _outcome.setdefault(number, []).append(report.passed and report.when == "call")


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    elapsed = time.perf_counter() - _started
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        results = _outcome.get(number, [])
        ok = bool(results) and all(results)
        note = ""
        if number == 9:
            # the runtime budget covers the whole session, so it is judged here
            ok = ok and elapsed < SUITE_BUDGET_S
            note = f" (suite {elapsed:.1f}s, budget {SUITE_BUDGET_S:.0f}s)"
        terminalreporter.write_line(f"AC{number} {'PASS' if ok else 'FAIL'}  {_criteria[number]}{note}")
