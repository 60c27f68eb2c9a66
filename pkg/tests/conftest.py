import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_RESULTS: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    if rep.when == "setup" and rep.skipped:
        _RESULTS[number] = (title, "WAIVED", str(rep.longrepr[-1]) if rep.longrepr else "")
    elif rep.when == "call":
        if rep.skipped:
            status = "WAIVED"
            detail = str(rep.longrepr[-1]) if isinstance(rep.longrepr, tuple) else detail
        else:
            status = "PASS" if rep.passed else "FAIL"
        _RESULTS[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status, detail = _RESULTS[number]
        line = f"criterion {number} [{status}] {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
