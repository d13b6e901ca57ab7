import os
import sys

from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        ok = call.excinfo is None
        _CRITERIA[number] = (title, ok, call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, dur = _CRITERIA[number]
        verdict = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title} ({dur:.2f}s)")
