import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ncsrate.lti import RationalFilter, StateSpace
from ncsrate.plant import TwoByTwoPlant, benchmark_plant

settings.register_profile("ci", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")


@pytest.fixture(scope="session")
def plant():
    return benchmark_plant()


@pytest.fixture(scope="session")
def stable_plant():
    f = RationalFilter([1.0], [1.0, -0.5])
    g = RationalFilter([0.5, 0.1], [1.0, -0.2, 0.08])
    return TwoByTwoPlant(f, g, RationalFilter([1.0, 0.3], [1.0, 0.4]), g)


@pytest.fixture(scope="session")
def programs(plant):
    from ncsrate.snr import build_youla_program

    cache = {}

    def get(h, n_q_max=256):
        key = (h, n_q_max)
        if key not in cache:
            cache[key] = build_youla_program(plant, h, n_q_max=n_q_max)
        return cache[key]

    return get


def random_stable_ss(rng, n, p=1, m=1, radius=0.9):
    """Random stable realization with spectral radius at most ``radius``."""
    A = rng.standard_normal((n, n))
    rho = max(np.abs(np.linalg.eigvals(A)).max(), 1e-12)
    A *= rng.uniform(0.1, radius) / rho
    return StateSpace(A, rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m)))


ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
