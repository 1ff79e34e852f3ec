import time
from collections import OrderedDict

import pytest

# criterion number -> {"title", "passed", "seconds", "tests", "budget"}
CRITERIA: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, budget=None): acceptance criterion covered by the test; "
                            "budget is the criterion's total runtime limit in seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_call(item):
    start = time.perf_counter()
    yield
    item._criterion_seconds = time.perf_counter() - start


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    number, title = marker.args
    entry = CRITERIA.setdefault(number, {"title": title, "passed": True, "seconds": 0.0, "tests": 0,
                                         "budget": marker.kwargs.get("budget")})
    entry["tests"] += 1
    entry["seconds"] += getattr(item, "_criterion_seconds", 0.0)
    if not rep.passed:
        entry["passed"] = False


def over_budget(entry) -> bool:
    return entry["budget"] is not None and entry["seconds"] > entry["budget"]


def pytest_sessionfinish(session):
    if any(over_budget(e) for e in CRITERIA.values()) and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        e = CRITERIA[number]
        status = "PASS" if e["passed"] and not over_budget(e) else "FAIL"
        limit = "" if e["budget"] is None else f" of {e['budget']}s budget"
        note = "  OVER BUDGET" if over_budget(e) else ""
        terminalreporter.write_line(f"criterion {number:2d} {status}  {e['title']}  "
                                    f"({e['tests']} tests, {e['seconds']:.1f}s{limit}){note}")
