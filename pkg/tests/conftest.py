import numpy as np
import pytest

from ciag.dataio import from_dense, logistic_problem, synth_generate
from ciag.oracle import assemble_problem, make_quadratic_component


def fd_grad(f, x, h=1e-5):
    """Central finite-difference gradient."""
    g = np.zeros_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jac(f, x, h=1e-5):
    """Central finite-difference Jacobian of a vector map (columns = directions)."""
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.column_stack(cols)


def random_psd(rng, d, rank=None, shift=0.0):
    B = rng.standard_normal((d, rank or d))
    return B @ B.T / d + shift * np.eye(d)


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def quad_problem(rng):
    comps = [make_quadratic_component(random_psd(rng, 8, shift=0.05), rng.standard_normal(8)) for _ in range(10)]
    return assemble_problem(comps)


@pytest.fixture
def small_logistic(rng):
    X = rng.uniform(-1, 1, size=(5, 3))
    y = np.where(rng.uniform(size=5) > 0.5, 1.0, -1.0)
    return logistic_problem(from_dense(X, y))


@pytest.fixture(scope="session")
def synth_100_11():
    return logistic_problem(synth_generate(100, 11, 3))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
