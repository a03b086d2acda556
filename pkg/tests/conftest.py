import numpy as np
import pytest

from faps.affine import BaseTemplate
from faps.geometry import SearchSpace

_acceptance_results = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(code, title): exit criterion, reported in the summary")


@pytest.fixture
def space():
    return SearchSpace()


@pytest.fixture
def base():
    return BaseTemplate()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        code, title = marker.args
        _acceptance_results.append((code, title, report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for code, title, outcome, duration in sorted(_acceptance_results, key=lambda r: int(r[0][2:])):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict} {code} {title} ({duration:.2f}s)")
