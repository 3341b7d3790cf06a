import os

import pytest


@pytest.fixture
def surreal_home(tmp_path, monkeypatch):
    home = tmp_path / "surreal-home"
    monkeypatch.setenv("SURREAL_HOME", str(home))
    return home


def cpu_count() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")
    config._criteria = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when not in ("setup", "call"):
        return
    number, title = mark.args
    results = item.config._criteria
    if call.excinfo is None:
        if call.when == "call":
            results[number] = ("PASS", title, _details(item))
        return
    if call.excinfo.errisinstance(pytest.skip.Exception):
        results[number] = ("SKIP", title, str(call.excinfo.value))
    else:
        msg = call.excinfo.exconly().splitlines()[0][:200]
        results[number] = ("FAIL", title, "; ".join(filter(None, [_details(item), msg])))


def _details(item) -> str:
    return "; ".join(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title, details = results[number]
        line = f"criterion {number:>2} {status}: {title}"
        terminalreporter.write_line(line + (f" ({details})" if details else ""))
