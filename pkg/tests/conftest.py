import numpy as np
import pytest

from polmult import kernels

_RESULTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")
    config.addinivalue_line("markers", "slow: long-running Monte Carlo checks")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    entry = _RESULTS.setdefault(number, {"title": title, "passed": True, "parts": []})
    if report.failed:
        entry["passed"] = False
    if report.when == "call" or report.failed:
        entry["parts"].append((item.name, "PASS" if report.passed else "FAIL", report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        status = "PASS" if entry["passed"] else "FAIL"
        secs = sum(p[2] for p in entry["parts"])
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {entry['title']}  ({secs:.2f} s)")
        if len(entry["parts"]) > 1:
            for name, st, dur in entry["parts"]:
                terminalreporter.write_line(f"    {st}  {name}  ({dur:.2f} s)")


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    # JIT compilation (or cache loading) happens once, outside timed regions.
    kernels.warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
