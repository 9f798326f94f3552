import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bvnma import Dataset, StudyRecord, builtin_scenario, simulate

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def scenario1():
    return simulate(builtin_scenario("scenario1"), seed=42)


@pytest.fixture(scope="session")
def scenario2():
    return simulate(builtin_scenario("scenario2"), seed=42)


def make_pairwise(n=10, seed=0, rho=0.8):
    """Two-treatment dataset drawn from the marginal model."""
    rng = np.random.default_rng(seed)
    studies = []
    for i in range(n):
        s1, s2 = rng.uniform(0.15, 0.25, 2)
        t1, t2 = 0.4, 0.5
        cov = np.array([[s1 ** 2 + t1 ** 2, 0.5 * s1 * s2 + rho * t1 * t2],
                        [0.5 * s1 * s2 + rho * t1 * t2, s2 ** 2 + t2 ** 2]])
        y = rng.multivariate_normal([1.0, 1.5], cov)
        studies.append(StudyRecord(f"S{i:02d}", "A", "B", float(y[0]), float(s1),
                                   float(y[1]), float(s2), 0.5))
    return Dataset.from_studies(studies)


@pytest.fixture(scope="session")
def pairwise():
    return make_pairwise()


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
