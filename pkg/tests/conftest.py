import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from paramspmm.matrix_io import CsrMatrix

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance verdicts, printed at the end of the session
ACCEPTANCE_LINES = []


def random_csr(n, density, seed, integer=False):
    rng = np.random.default_rng(seed)
    mask = rng.random((n, n)) < density
    if integer:
        vals = rng.integers(-4, 5, size=(n, n)).astype(np.float64)
    else:
        vals = rng.uniform(-1, 1, size=(n, n))
    dense = np.where(mask, vals, 0.0)
    return CsrMatrix.from_dense(dense)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
