import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20201015)


# One summary line per acceptance criterion, from tests marked ``criterion``.
_CRITERIA: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    k, title = mark.args
    entry = _CRITERIA.setdefault(k, {"title": title, "passed": True, "details": [], "seconds": 0.0})
    entry["passed"] &= report.passed
    entry["seconds"] += report.duration
    entry["details"] += [v for name, v in item.user_properties if name == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        e = _CRITERIA[k]
        status = "PASS" if e["passed"] else "FAIL"
        detail = "; ".join(e["details"])
        terminalreporter.write_line(f"criterion {k:2d} {status}  {e['title']} ({e['seconds']:.1f} s){': ' + detail if detail else ''}")
