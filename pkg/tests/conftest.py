import numpy as np
import pytest

from dsmc_balance.costmap import CostMap
from dsmc_balance.geometry import Box3


def brute_integrate(cmap: CostMap, box: Box3) -> float:
    """Cell-by-cell overlap volume sum; independent of the vectorized path."""
    edges = [cmap.bounds.lo[k] + cmap.bounds.lengths[k] * np.arange(cmap.shape[k] + 1) / cmap.shape[k]
             for k in range(3)]
    total = 0.0
    for i in range(cmap.shape[0]):
        ox = min(edges[0][i + 1], box.hi[0]) - max(edges[0][i], box.lo[0])
        if ox <= 0:
            continue
        for j in range(cmap.shape[1]):
            oy = min(edges[1][j + 1], box.hi[1]) - max(edges[1][j], box.lo[1])
            if oy <= 0:
                continue
            for k in range(cmap.shape[2]):
                oz = min(edges[2][k + 1], box.hi[2]) - max(edges[2][k], box.lo[2])
                if oz <= 0:
                    continue
                cell_vol = ((edges[0][i + 1] - edges[0][i]) * (edges[1][j + 1] - edges[1][j])
                            * (edges[2][k + 1] - edges[2][k]))
                total += cmap.values[i, j, k] * ox * oy * oz / cell_vol
    return total


def sliver_cut(costs, length, target, slivers=100_000):
    """Half-mass point of a 1D piecewise-constant density by fine subdivision."""
    costs = np.asarray(costs, dtype=float)
    n = len(costs)
    per = slivers // n
    mass = np.repeat(costs / per, per)
    x = np.linspace(0.0, length, n * per + 1)
    cum = np.concatenate(([0.0], np.cumsum(mass)))
    i = np.searchsorted(cum, target * cum[-1])
    return x[i]


@pytest.fixture
def unit_cube():
    return Box3((0, 0, 0), (1, 1, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
