import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# ---------------------------------------------------------------------------
# acceptance summary: one line per @pytest.mark.criterion test

_RESULTS = pytest.StashKey()
_SETUP = pytest.StashKey()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.stash[_RESULTS] = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None and rep.when == "setup":
        # shared fixtures do the heavy lifting; count their time too
        item.stash[_SETUP] = rep.duration
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS"
    if rep.failed:
        status = "FAIL"
        detail = call.excinfo.exconly().splitlines()[0][:160] if call.excinfo else "failed"
    elif rep.skipped:
        status = "SKIP"
    elif detail.startswith("warning"):
        status = "WARN"
    item.config.stash[_RESULTS].append((number, title, status, detail,
                                        rep.duration + item.stash.get(_SETUP, 0.0)))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_RESULTS, [])
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, status, detail, secs in sorted(results, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {number} [{status}] {title} ({secs:.1f} s): {detail}")
