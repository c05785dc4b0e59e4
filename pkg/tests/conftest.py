import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cvrplab.core import Instance

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng, n, capacity=None, name="r"):
    """Uniform instance with integer demands in [1, 9]; capacity defaults to a few routes' worth."""
    demands = rng.integers(1, 10, size=n).astype(float)
    if capacity is None:
        capacity = float(max(demands.max(), np.ceil(demands.sum() / rng.integers(1, 4))))
    return Instance(tuple(rng.random(2)), rng.random((n, 2)), demands, capacity, name)


def make(depot, customers, demands, capacity, name="hand"):
    return Instance(tuple(depot), np.array(customers, dtype=float), np.array(demands, dtype=float),
                    float(capacity), name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed again at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
