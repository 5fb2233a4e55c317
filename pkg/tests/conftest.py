import re

import pytest

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    num, title = marker.args
    if rep.when == "setup" and rep.passed:
        return
    prev = _CRITERIA.get(num, (title, True, ""))
    detail = getattr(item, "criterion_detail", "")
    if rep.failed:
        msg = str(rep.longrepr).strip().splitlines()
        detail = next((m for m in reversed(msg) if re.match(r"^E\s", m)), msg[-1] if msg else "")
    _CRITERIA[num] = (title, prev[1] and rep.passed, detail or prev[2])


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[num]
        line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {title}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
