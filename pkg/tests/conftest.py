import numpy as np
import pytest

from graphvortex.graph import WeightedGraph, complete_graph, cycle_graph, path_graph


@pytest.fixture
def K2():
    return complete_graph(2, names="ab")


@pytest.fixture
def C3():
    return cycle_graph(3, names=["v1", "v2", "v3"])


@pytest.fixture
def P4():
    return path_graph(4, names=["v1", "v2", "v3", "v4"])


def random_graph(rng, n_min=2, n_max=9, p_extra=0.4):
    """Connected graph: random spanning tree plus extra edges, random weights and measure."""
    n = int(rng.integers(n_min, n_max + 1))
    ids = [f"x{k}" for k in range(n)]
    edges = {}
    for k in range(1, n):
        j = int(rng.integers(0, k))
        edges[(j, k)] = rng.uniform(0.2, 3.0)
    for a in range(n):
        for b in range(a + 1, n):
            if (a, b) not in edges and rng.random() < p_extra:
                edges[(a, b)] = rng.uniform(0.2, 3.0)
    mu = rng.uniform(0.3, 2.5, size=n)
    return WeightedGraph(ids, [(ids[a], ids[b], w) for (a, b), w in edges.items()], mu)


def dense_laplacian(g):
    """Independent oracle: graph Laplacian matrix built entry by entry from the edge list."""
    n = g.n_vertices
    D = np.zeros((n, n))
    for i, j, w in zip(g.edge_heads, g.edge_tails, g.edge_weights):
        D[i, j] += w / g.mu[i]
        D[j, i] += w / g.mu[j]
        D[i, i] -= w / g.mu[i]
        D[j, j] -= w / g.mu[j]
    return D


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
