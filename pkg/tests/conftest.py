import numpy as np
import pytest

from spectral_flow import ConstantPsi, ModelSpec


@pytest.fixture
def gap_model():
    """Period-2 cell (0, 3) in d=1: bands [1, 2] and [5, 6]."""
    return ModelSpec(1, (2,), (0.0, 3.0), ConstantPsi(1.0), 2.0)


@pytest.fixture
def free1():
    return ModelSpec.free(1)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def dense_count(matrix, lam):
    """Oracle: strict count of eigenvalues below ``lam`` by full diagonalization."""
    return int(np.sum(np.linalg.eigvalsh(np.asarray(matrix)) < lam))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
