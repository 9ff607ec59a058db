import numpy as np
import pytest

from dcsflow import DoubleGyreParams, GridSpec, TimeGrid, build_snapshot_matrix, pod_svd


@pytest.fixture(scope="session")
def small_X():
    return build_snapshot_matrix(GridSpec(11, 6), TimeGrid(count=201), DoubleGyreParams())


@pytest.fixture(scope="session")
def small_basis(small_X):
    return pod_svd(small_X, rank=4)


@pytest.fixture(scope="session")
def paper_X():
    return build_snapshot_matrix(GridSpec(50, 25), TimeGrid(count=2001), DoubleGyreParams())


@pytest.fixture(scope="session")
def paper_svd(paper_X):
    U, s, _ = np.linalg.svd(paper_X.data, full_matrices=False)
    return U, s


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture
def accept(request):
    """Record one pass/fail line for an acceptance criterion; returns ``ok``."""
    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        request.config._acceptance_lines.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
