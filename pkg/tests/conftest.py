import numpy as np
import pytest

from xmint.core import Dataset, standardize


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_dataset(rng, n, V, scale=1.0):
    X = rng.normal(size=n)
    M = 0.5 * X[:, None] * rng.normal(size=V) + rng.normal(size=(n, V))
    Y = 0.7 * X + M @ rng.normal(scale=scale, size=V) + rng.normal(size=n)
    return Dataset(X=X, Y=Y, M=M)


def random_standardized(rng, n, V, scale=1.0):
    return standardize(random_dataset(rng, n, V, scale))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
