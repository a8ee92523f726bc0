import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by this test")
    config.stash[_RESULTS] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call":
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.failed and not detail:
        detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else "failed"
    item.config.stash[_RESULTS].append((number, title, report.passed, detail))


def pytest_terminal_summary(terminalreporter, config):
    results = sorted(config.stash.get(_RESULTS, []))
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  criterion {number:>2}  {title}: {detail}")


@pytest.fixture
def detail(record_property):
    """Attach a human-readable measurement to the acceptance line."""
    def add(text):
        record_property("detail", text)
    return add
