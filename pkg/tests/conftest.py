import pytest

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    if report.when == "setup" and report.passed:
        return
    verdict = "PASS" if report.passed else "FAIL"
    # a criterion fails if any of its tests fails
    if _ACCEPTANCE.get(number, ("PASS", title))[0] == "FAIL":
        verdict = "FAIL"
    _ACCEPTANCE[number] = (verdict, title)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        verdict, title = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}: {title}")
