import pytest

_results: dict[int, tuple[str, list[bool]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    _, oks = _results.setdefault(number, (title, []))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        oks.append(report.outcome == "passed")


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, oks = _results[number]
        status = "PASS" if oks and all(oks) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}")
