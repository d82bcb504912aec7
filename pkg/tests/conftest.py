import pytest

from icsim.engine import default_initial_state, run
from icsim.reference import load_catalog, swat_plant, toy_plant

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = _CRITERIA.get(report.nodeid)
    if marker is None:
        return
    number, title, outcomes = marker
    outcomes.append(report.outcome)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _CRITERIA[item.nodeid] = (m.args[0], m.args[1], [])


def pytest_terminal_summary(terminalreporter):
    summary = {}
    for number, title, outcomes in _CRITERIA.values():
        entry = summary.setdefault(number, [title, []])
        entry[1].extend(outcomes)
    if not summary:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(summary):
        title, outcomes = summary[number]
        if not outcomes:
            status = "NOT RUN"
        elif all(o == "passed" for o in outcomes):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status:7s} {title}")


@pytest.fixture(scope="session")
def toy():
    return toy_plant()


@pytest.fixture(scope="session")
def swat():
    return swat_plant()


@pytest.fixture(scope="session")
def swat_normal(swat):
    return run(swat, default_initial_state(swat), None, 1.0, 14400.0)


@pytest.fixture(scope="session")
def catalog(swat):
    return load_catalog(model=swat)
