import numpy as np
import pytest

from mmwave_dl.channel import SystemConfig, build_dictionary
from mmwave_dl.sounding import measurement_matrix, sample_pilot_block


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def cfg():
    return SystemConfig()


@pytest.fixture(scope="session")
def link(cfg):
    """Default-config dictionary, pilot block and measurement matrix."""
    d = build_dictionary(cfg.n_antennas, cfg.grid_size)
    block = sample_pilot_block(cfg, np.random.default_rng(7))
    return d, block, measurement_matrix(block, d)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# --------------------------------------------------------------------------
# acceptance reporting: tests marked ``criterion(n, name)`` get one
# PASS/FAIL line each in the terminal summary

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not rep.failed:
        return
    number, name = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    ok = rep.passed and _CRITERIA.get(number, (True,))[0]
    _CRITERIA[number] = (ok, name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        ok, name, detail = _CRITERIA[number]
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:2d} {name}"
        terminalreporter.write_line(line + (f": {detail}" if detail else ""))
