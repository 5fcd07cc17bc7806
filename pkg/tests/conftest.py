import numpy as np
import pytest

from relent.drift import ReweightConfig, drift_curve
from relent.md import SimConfig, run

ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(lines):
        terminalreporter.write_line(line[1])


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line for a numbered criterion, then assert it."""
    store = request.config.stash[ACCEPTANCE_KEY]

    def record(number, title, passed, detail):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {title}  [{detail}]"
        store.append((number, line))
        print(line)
        assert passed, line

    return record


@pytest.fixture(scope="session")
def desk_config():
    return SimConfig()


@pytest.fixture(scope="session")
def desk_trajectory(desk_config):
    return run(desk_config)


@pytest.fixture(scope="session")
def desk_targets(desk_trajectory):
    return np.arange(0.5, desk_trajectory.F.max() - 0.25, 0.5)


@pytest.fixture(scope="session")
def desk_curve(desk_trajectory, desk_targets):
    return drift_curve(desk_trajectory, desk_targets, ReweightConfig())
