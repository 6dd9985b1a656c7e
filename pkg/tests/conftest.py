import numpy as np
import pytest

from stvecchia.covariance import CovarianceParams
from stvecchia.data import make_dataset
from stvecchia.trajectories import random_waypoint_layout


@pytest.fixture
def small_ds():
    """40 points, 3 sensors, values drawn iid so fits have something to chew on."""
    rng = np.random.default_rng(11)
    n = 40
    return make_dataset(
        rng.uniform(0, 5000, n), rng.uniform(0, 5000, n), np.sort(rng.uniform(0, 3600, n)),
        rng.integers(1, 4, n), value=rng.normal(size=n),
    )


@pytest.fixture
def prm():
    return CovarianceParams(sigma2=1.0, theta1=2000.0, theta2=900.0, tau2=0.2, gamma=0.3, kappa=16.0)


@pytest.fixture(scope="session")
def layout200():
    return random_waypoint_layout(n=200, sensors=3, seed=5)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            props = dict(getattr(rep, "user_properties", []))
            if rep.when == "call" and "verdict" in props:
                lines.append((rep.nodeid, "PASS" if rep.passed else "FAIL", props["verdict"]))
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, status, detail in sorted(lines):
            terminalreporter.write_line(f"{status}  {detail}")
