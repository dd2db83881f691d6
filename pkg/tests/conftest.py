import pytest

# criterion number -> title, and test node -> criterion number
_TITLES = {}
_NODES = {}
_OUTCOMES = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None and len(m.args) == 2:
            num, title = m.args
            _TITLES[num] = title
            _NODES[item.nodeid] = num


def pytest_runtest_logreport(report):
    num = _NODES.get(report.nodeid)
    if num is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.passed:
            outcome = "PASS"
        elif report.skipped:
            outcome = "SKIP"
        else:
            outcome = "FAIL"
        _OUTCOMES.setdefault(num, []).append(outcome)


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _TITLES:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_TITLES):
        got = _OUTCOMES.get(num, [])
        if not got:
            status = "NOT RUN"
        elif "FAIL" in got:
            status = "FAIL"
        elif all(o == "PASS" for o in got):
            status = "PASS"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"criterion {num:2d}: {status} - {_TITLES[num]}")
