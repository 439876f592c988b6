import math

import numpy as np
import pytest
from scipy import stats

from pottsmeta.rgraph import MultiGraph


def chi2_pvalue(observed, expected_probs, min_expected=5.0):
    """Pearson chi-square p-value, pooling cells with small expectation."""
    observed = np.asarray(observed, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    total = observed.sum()
    exp = probs * total
    small = exp < min_expected
    if small.any():
        observed = np.append(observed[~small], observed[small].sum())
        exp = np.append(exp[~small], exp[small].sum())
        if exp[-1] == 0:
            observed, exp = observed[:-1], exp[:-1]
    stat = float(np.sum((observed - exp) ** 2 / exp))
    return float(stats.chi2.sf(stat, len(exp) - 1))


@pytest.fixture
def triangle():
    return MultiGraph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def k4():
    return MultiGraph.from_edges(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)])


@pytest.fixture
def prism():
    return MultiGraph.from_edges(
        6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (0, 3), (1, 4), (2, 5)]
    )


@pytest.fixture
def five_graph():
    """Five vertices with a parallel pair and a self-loop."""
    return MultiGraph.from_edges(5, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (3, 4), (4, 4), (0, 4)])


LN2 = math.log(2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
