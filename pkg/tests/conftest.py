"""Collects one result line per acceptance criterion and prints them at the end."""
import pytest

CRITERIA: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = getattr(item, "criterion_detail", "")
    CRITERIA[number] = ("PASS" if report.passed else "FAIL", title, detail)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        status, title, detail = CRITERIA[number]
        line = f"{status} {number:2d}. {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
