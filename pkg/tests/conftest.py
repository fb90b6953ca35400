import json
import os

import pytest

from nonlocstab.discretize import DomainSpec, build_mesh
from nonlocstab.kernels import Interval

HERE = os.path.dirname(os.path.abspath(__file__))


@pytest.fixture(scope="session")
def oracles():
    with open(os.path.join(HERE, "oracles", "oracles.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def unit_domain():
    return DomainSpec(Interval(0.0, 1.0), 0.2)


@pytest.fixture(scope="session")
def unit_mesh(unit_domain):
    return build_mesh(unit_domain, 1.0 / 200)


class _PresetCache:
    """Runs each preset at most once per test session."""

    def __init__(self):
        self._results = {}

    def __call__(self, preset_id):
        if preset_id not in self._results:
            from nonlocstab.experiments import run_preset
            self._results[preset_id] = run_preset(preset_id)
        return self._results[preset_id]


@pytest.fixture(scope="session")
def preset_result():
    return _PresetCache()


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
