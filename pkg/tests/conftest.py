import numpy as np
import pytest

from elliptic_dkp import theta
from elliptic_dkp.scenario import Pipeline, Scenario

TAUS = (0.8j, 1j, 1.5j)

# criterion number -> (passed, detail); filled by test_acceptance
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"AC{k:<2} {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def n2():
    p = Pipeline(Scenario.named("default-n2"))
    p.field
    return p


@pytest.fixture(scope="session")
def n3():
    p = Pipeline(Scenario.named("default-n3"))
    p.field
    return p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=theta.available_backends())
def backend(request):
    old = theta.BACKEND
    theta.use_backend(request.param)
    yield request.param
    theta.use_backend(old)


def random_cell(rng, tau, n):
    t = float(np.imag(tau))
    return rng.uniform(0, 1, n) + 1j * t * rng.uniform(0, 1, n)
