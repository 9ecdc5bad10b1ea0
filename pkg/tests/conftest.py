import pytest

_results: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title, budget = mark.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
            status, detail = "SKIP", reason.removeprefix("Skipped: ")
        else:
            status = "PASS" if rep.passed else "FAIL"
            detail = f"{rep.duration:.2f}s of {budget:g}s"
        _results[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        status, title, detail = _results[number]
        terminalreporter.write_line(f"AC{number:<2} {status:<4} {title} ({detail})")
