import sys

import numpy as np
import pytest

from ordgraph.rng import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


def random_graph(n, p, gen):
    """Edge list of an Erdos-Renyi graph over n nodes."""
    iu, ju = np.triu_indices(n, 1)
    keep = gen.random(iu.size) < p
    return np.column_stack([iu[keep], ju[keep]])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
