import numpy as np
import pytest

from gbdt_ohe import Dataset, GbdtParams, TreeParams, fit_gbdt, synth_square


@pytest.fixture(scope="session")
def square_data():
    return synth_square(400, seed=3)


@pytest.fixture(scope="session")
def small_model(square_data):
    return fit_gbdt(square_data, GbdtParams(30, 0.3, tree=TreeParams(max_depth=3)))


@pytest.fixture(scope="session")
def multi_data():
    rng = np.random.default_rng(11)
    X = np.column_stack([rng.standard_normal(300), rng.integers(0, 4, 300), rng.uniform(-1, 1, 300)])
    y = np.sin(2 * X[:, 0]) + 0.5 * X[:, 1] - X[:, 2] ** 2 + 0.2 * rng.standard_normal(300)
    return Dataset(X, y, ("a", "b", "c"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
