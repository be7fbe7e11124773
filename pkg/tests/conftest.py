import random

import pytest

from minoragg.graphs import RootedTree, WeightedGraph


def gnp_graph(rng: random.Random, n: int, p: float, wmax: int = 10) -> WeightedGraph:
    """Connected G(n, p) with uniform integer weights; retries until connected."""
    nodes = list(range(1, n + 1))
    while True:
        edges = []
        for i in range(n):
            for j in range(i + 1, n):
                if rng.random() < p:
                    edges.append((nodes[i], nodes[j], rng.randint(1, wmax)))
        try:
            return WeightedGraph(nodes, edges)
        except Exception:
            continue


def random_spanning_tree(rng: random.Random, g: WeightedGraph) -> RootedTree:
    """Uniform-ish random spanning tree via randomized DFS."""
    root = rng.choice(list(g.nodes))
    parent = {root: None}
    stack = [root]
    while stack:
        x = stack.pop()
        nbrs = [e.other(x) for e in g.incident(x)]
        rng.shuffle(nbrs)
        for y in nbrs:
            if y not in parent:
                parent[y] = x
                stack.append(y)
    return RootedTree(parent, root)


def random_tree(rng: random.Random, n: int, ids=None) -> RootedTree:
    nodes = list(ids) if ids is not None else list(range(1, n + 1))
    rng.shuffle(nodes)
    parent = {nodes[0]: None}
    for i in range(1, len(nodes)):
        parent[nodes[i]] = nodes[rng.randrange(i)]
    return RootedTree(parent, nodes[0])


def tree_as_graph(t: RootedTree, rng=None, wmax: int = 10) -> WeightedGraph:
    w = (lambda: rng.randint(1, wmax)) if rng else (lambda: 1)
    return WeightedGraph(t.nodes, [(u, v, w()) for u, v in t.edge_pairs()])


@pytest.fixture
def rng():
    return random.Random(0xC0FFEE)
