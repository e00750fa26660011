import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, str] = {}
_RESULTS: dict[int, bool] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers",
        "acceptance(num, summary): tracked release criterion; the terminal "
        "summary prints one pass/fail line per criterion",
    )


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker:
            num, summary = marker.args
            _CRITERIA[num] = summary


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.when in ("setup", "call"):
        num, _ = marker.args
        ok = _RESULTS.get(num, True) and not report.failed
        if report.when == "setup" and report.skipped:
            ok = False
        _RESULTS[num] = ok


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num in sorted(_CRITERIA):
        status = "pass" if _RESULTS.get(num, False) else "FAIL"
        terminalreporter.write_line(
            f"criterion {num}: {status} - {_CRITERIA[num]}"
        )
