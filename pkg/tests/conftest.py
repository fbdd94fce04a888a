import pytest

from flexscrew import ScrewSpec, calibrate_kappa, sensitivity_set

TARGET_FORCE_155 = 4.67  # N at 6 mm, 155/150 GPa


@pytest.fixture(scope="session")
def reference_spec():
    return ScrewSpec()


@pytest.fixture(scope="session")
def mat155():
    return sensitivity_set()[0]


@pytest.fixture(scope="session")
def kappa_ref(reference_spec, mat155):
    return calibrate_kappa(reference_spec, mat155, 6.0, TARGET_FORCE_155)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    previous = item.config._criteria.get(number)
    failed = report.failed or (previous is not None and not previous[1])
    duration = report.duration + (previous[2] if previous else 0.0)
    item.config._criteria[number] = (title, not failed, duration)


def pytest_terminal_summary(terminalreporter, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        title, ok, duration = criteria[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title} ({duration:.2f} s)")
