"""Shared pytest hooks: one summary line per acceptance criterion."""

from collections import defaultdict

import pytest

_RESULTS = defaultdict(list)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and short title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        report.criterion = (mark.args[0], mark.args[1])


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        n, title = marker
        _TITLES[n] = title
        _RESULTS[n].append((report.outcome, [f"{k}={v}" for k, v in report.user_properties]))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        runs = _RESULTS[n]
        status = "PASS" if all(o == "passed" for o, _ in runs) else "FAIL"
        detail = "; ".join(d for _, ds in runs for d in ds)
        terminalreporter.write_line(f"criterion {n} ({_TITLES[n]}): {status} {detail}".rstrip())
