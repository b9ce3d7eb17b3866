import numpy as np
import pytest

from mro.clustering import kmeans
from mro.data import Dataset, SupportSet, UncertaintySpec
from mro.families import ConcaveQuadratic


def random_pd(rng, n, m, shift=0.5):
    G = rng.normal(size=(n, m, m))
    return np.einsum("nki,nkj->nij", G, G) + shift * np.eye(m)


def grid_max_1d(f, lo, hi, num=200_001):
    """Brute-force maximum of a scalar function on an interval."""
    grid = np.linspace(lo, hi, num)
    vals = np.array([f(u) for u in grid])
    i = int(np.argmax(vals))
    return grid[i], vals[i]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def toy_data():
    return Dataset(np.array([[0.0], [1.0], [4.0], [5.0]]))


@pytest.fixture
def quad_instance():
    """Small concave quadratic instance used by several modules."""
    r = np.random.default_rng(7)
    fam = ConcaveQuadratic(random_pd(r, 3, 2))
    data = Dataset(r.normal(size=(12, 2)))
    cs = kmeans(data, 3, seed=0)
    spec = UncertaintySpec(2, 0.5, SupportSet.full(2))
    x = r.uniform(0.2, 1.0, 3)
    return fam, data, cs, spec, x


# -- acceptance report ---------------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
