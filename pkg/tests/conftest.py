import importlib.util
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nsvt.model import NsvtParams, SeriesData, simulate_nsvt

settings.register_profile(
    "nsvt",
    deadline=None,
    derandomize=True,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "nsvt"))

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


def load_fixture_generator():
    """Import ``fixtures/make_portfolio_fixture.py``, which is a script, not a module."""
    spec = importlib.util.spec_from_file_location(
        "make_portfolio_fixture", FIXTURES / "make_portfolio_fixture.py"
    )
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def make_series(n=400, beta=(1.0, -0.5), sigma2=0.5, nu=5.0, rho=0.7, seed=0):
    """Simulated series with an intercept and standard normal covariates."""
    rng = np.random.default_rng(seed)
    beta = np.asarray(beta, dtype=float)
    X = np.ones((n, beta.size))
    X[:, 1:] = rng.standard_normal((n, beta.size - 1))
    params = NsvtParams(beta, sigma2, nu, rho)
    return SeriesData(simulate_nsvt(params, X, seed=rng), X), params


@pytest.fixture
def series():
    return make_series()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
