import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hts.data.synth import synthesize_dataset
from hts.model.config import toy
from hts.model.network import Model
from hts.numeric.rng import make_rng

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return make_rng(1234)


@pytest.fixture
def toy_model64():
    return Model.create(toy(), make_rng(0), np.float64)


@pytest.fixture(scope="session")
def synth64():
    return synthesize_dataset(64, classes=8, size=32, seed=0)


def pytest_configure(config):
    config.stash[_RESULTS] = {}


_RESULTS = pytest.StashKey[dict]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    report = (yield).get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or report.when == "teardown" and report.passed:
        return
    results = item.config.stash[_RESULTS]
    n, title = mark.args
    if report.failed or report.when == "call":
        key = (n, title)
        results[key] = results.get(key, True) and report.passed


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), ok in sorted(results.items()):
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}")
