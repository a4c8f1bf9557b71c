import itertools

import numpy as np
import pytest

from csne.graph import SignedGraph


def make_graph(triples, n=None):
    """Graph from (u, v, sign) triples on integer nodes 0..n-1."""
    if n is None:
        n = 1 + max(max(u, v) for u, v, _ in triples)
    edges = [(u, v) for u, v, _ in triples]
    signs = [s for _, _, s in triples]
    return SignedGraph(n, np.array(edges, dtype=np.int64).reshape(-1, 2), signs)


def random_graph(rng, n, p, p_pos=0.6):
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    edges = np.column_stack((iu[0][keep], iu[1][keep]))
    signs = np.where(rng.random(len(edges)) < p_pos, 1, -1)
    return SignedGraph(n, edges, signs)


def dense_signs(g):
    """Dense {-1, 0, 1} adjacency, built without the library's CSR helpers."""
    a = np.zeros((g.n, g.n), dtype=np.int64)
    for (i, j), s in zip(g.edges, g.signs):
        a[i, j] = a[j, i] = s
    return a


def brute_census(g):
    """Triangle counts by enumerating every node triple."""
    a = dense_signs(g)
    counts = {3: 0, 2: 0, 1: 0, 0: 0}
    for i, j, k in itertools.combinations(range(g.n), 3):
        s = (a[i, j], a[i, k], a[j, k])
        if 0 in s:
            continue
        counts[sum(v > 0 for v in s)] += 1
    return counts[3], counts[2], counts[1], counts[0]


@pytest.fixture
def ppm_triangle():
    # {0,1}:+, {0,2}:+, {1,2}:-
    return make_graph([(0, 1, 1), (0, 2, 1), (1, 2, -1)])


@pytest.fixture
def ppp_triangle():
    return make_graph([(0, 1, 1), (0, 2, 1), (1, 2, 1)])


@pytest.fixture
def alt_square():
    # 4-cycle 0-1-2-3-0 with alternating signs
    return make_graph([(0, 1, 1), (1, 2, -1), (2, 3, 1), (0, 3, -1)])


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
