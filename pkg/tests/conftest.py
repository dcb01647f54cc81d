import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pullback_lab.geometry import sphere_chart, torus

ROOT = Path(__file__).resolve().parents[1]
ORACLES = json.loads((Path(__file__).with_name("oracles") / "values.json").read_text())

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture(scope="session")
def oracles():
    return ORACLES


@pytest.fixture(scope="session")
def T2():
    return torus((1.0, 1.0))


@pytest.fixture(scope="session")
def S2():
    return sphere_chart(margin=0.3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
