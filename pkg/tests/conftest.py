import pytest

# acceptance-criterion outcomes, filled by tests marked with @pytest.mark.criterion(n, "title")
_RESULTS: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, title = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        prev = _RESULTS.get(num, ("PASS", title))[0]
        status = "PASS" if rep.passed and prev == "PASS" else "FAIL"
        _RESULTS[num] = (status, title)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        status, title = _RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {title}")
