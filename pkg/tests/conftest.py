import pytest

# acceptance criteria report one line each at the end of the run
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        verdict, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{verdict}] {n}. {line}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n, title = marker.args
    detail = getattr(item, "acceptance_detail", "")
    verdict = "PASS" if rep.passed else "FAIL"
    line = f"{title}: {detail}" if detail else title
    ACCEPTANCE[n] = (verdict, line)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): an acceptance criterion")
