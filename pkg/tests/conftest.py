from collections import OrderedDict

import pytest

_criteria: "OrderedDict[str, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(key, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    key, title = marker.args
    entry = _criteria.setdefault(key, {"title": title, "passed": True, "seen": False, "failures": []})
    if rep.when == "call" or rep.failed:
        entry["seen"] = True
    if rep.failed:
        entry["passed"] = False
        entry["failures"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key, entry in _criteria.items():
        status = "PASS" if entry["passed"] and entry["seen"] else "FAIL"
        line = f"criterion {key}: {status}  {entry['title']}"
        if entry["failures"]:
            line += f"  (failed: {', '.join(entry['failures'])})"
        terminalreporter.write_line(line)
