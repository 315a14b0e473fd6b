import pytest

# criterion number -> list of (outcome, detail)
_RESULTS = {}
N_CRITERIA = 13


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        if rep.failed and not detail:
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
        _RESULTS.setdefault(marker.args[0], []).append((rep.outcome, detail))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in range(1, N_CRITERIA + 1):
        entries = _RESULTS.get(n)
        if not entries:
            tr.write_line(f"criterion {n:2d}: NOT RUN")
            continue
        ok = all(o == "passed" for o, _ in entries)
        status = "PASS" if ok else "FAIL"
        details = "; ".join(d for _, d in entries if d)
        tr.write_line(f"criterion {n:2d}: {status}  {details}")
