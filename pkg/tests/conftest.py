import pytest

from dronedet.network import build_baseline_tiny, build_custom_tiny

_criteria = {}


@pytest.fixture(scope="session")
def custom_net():
    return build_custom_tiny(seed=0)


@pytest.fixture(scope="session")
def baseline_net():
    return build_baseline_tiny(seed=0)


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _criteria[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(_criteria.items()):
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{mark}  {name}")
