import importlib

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

#: Lines "CRITERION n: PASS/FAIL ..." collected by the acceptance tests.
CRITERIA_LINES: list[str] = []


def _available_kernels():
    mods = [importlib.import_module("condmodes._pykernels")]
    try:
        mods.append(importlib.import_module("condmodes._ckernels"))
    except ImportError:
        pass
    return mods


KERNEL_MODULES = _available_kernels()


@pytest.fixture(params=KERNEL_MODULES, ids=lambda m: m.IMPLEMENTATION)
def kern(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES):
            terminalreporter.write_line(line)
