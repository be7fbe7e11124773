"""Sequential reference oracles: cut/cover values, global min-cut, and the
brute-force 2-respecting minimum.

Everything here is deliberately independent of the round-based engine; the
round programs are tested against these.
"""

from __future__ import annotations

import itertools

import numpy as np

from .graphs import (
    CutResult,
    Edge,
    GraphError,
    InvalidTreeEdge,
    RootedTree,
    WeightedGraph,
)

ORACLE_NODE_LIMIT = 200
EXHAUSTIVE_NODE_LIMIT = 14


class OracleLimitExceeded(GraphError):
    pass


def cut_value_pair(g: WeightedGraph, t: RootedTree, e, f=None) -> int:
    """Cut(e) if f is None, else Cut(e, f): total weight of graph edges whose
    tree path contains exactly one of {e, f}. e == f is rejected; callers must
    ask for the 1-respecting value explicitly."""
    eb = t.normalize_edge(e)
    if f is None:
        fb = None
    else:
        fb = t.normalize_edge(f)
        if fb == eb:
            raise InvalidTreeEdge("pair must be two distinct tree edges")
    total = 0
    for ge in g.edges:
        path = t.path_edge_bottoms(ge.u, ge.v)
        hits = (eb in path) + (fb in path if fb is not None else 0)
        if hits == 1:
            total += ge.weight
    return total


def cov_value_pair(g: WeightedGraph, t: RootedTree, e, f) -> int:
    """Cov(e, f): total weight of graph edges whose tree path covers both e
    and f. Cov(e) is cov_value_pair(g, t, e, e)."""
    eb = t.normalize_edge(e)
    fb = t.normalize_edge(f)
    total = 0
    for ge in g.edges:
        path = t.path_edge_bottoms(ge.u, ge.v)
        if eb in path and fb in path:
            total += ge.weight
    return total


def cov_matrix(g: WeightedGraph, t: RootedTree) -> tuple[np.ndarray, list[int]]:
    """Dense Cov matrix over all tree edges, plus the bottom-ID ordering.

    C[i, j] = Cov(edge_i, edge_j); the diagonal holds Cov(e) = Cut(e).
    """
    bottoms = sorted(t.edge_bottoms())
    idx = {b: i for i, b in enumerate(bottoms)}
    k = len(bottoms)
    cov = np.zeros((k, k), dtype=np.int64)
    for ge in g.edges:
        path = t.path_edge_bottoms(ge.u, ge.v)
        if not path:
            continue
        ind = np.array([idx[b] for b in path], dtype=np.intp)
        cov[np.ix_(ind, ind)] += ge.weight
    return cov, bottoms


def cut_matrix_from_cov(cov: np.ndarray) -> np.ndarray:
    """Cut(e, f) = Cov(e) + Cov(f) - 2 Cov(e, f); diagonal = Cut(e)."""
    d = np.diag(cov)
    cut = d[:, None] + d[None, :] - 2 * cov
    np.fill_diagonal(cut, d)
    return cut


def oracle_two_respecting(g: WeightedGraph, t: RootedTree) -> CutResult:
    """Brute-force minimum over all 1-respecting and distinct-pair
    2-respecting cuts of t."""
    if not t.spans(g):
        raise GraphError("tree does not span the graph")
    cov, bottoms = cov_matrix(g, t)
    cut = cut_matrix_from_cov(cov)
    k = len(bottoms)

    best_single = int(np.diag(cut).min())
    si = int(np.diag(cut).argmin())
    best = CutResult(best_single, "one-respecting", (bottoms[si],))

    if k >= 2:
        offdiag = cut + np.diag([np.iinfo(np.int64).max // 2] * k)
        i, j = np.unravel_index(int(offdiag.argmin()), offdiag.shape)
        val = int(offdiag[i, j])
        if val < best.value:
            a, b = sorted((bottoms[i], bottoms[j]))
            best = CutResult(val, "two-respecting", (a, b))
    return best


def cut_edge_set(g: WeightedGraph, t: RootedTree, tree_edges) -> tuple[int, ...]:
    """Graph edges crossing the cut determined by one or two tree edges."""
    bset = {t.normalize_edge(e) for e in tree_edges}
    out = []
    for ge in g.edges:
        path = t.path_edge_bottoms(ge.u, ge.v)
        if len(bset.intersection(path)) == 1:
            out.append(ge.index)
    return tuple(out)


def exhaustive_min_cut(g: WeightedGraph) -> tuple[int, frozenset[int]]:
    """Enumerate all 2^(n-1) partitions. Validation-only, n <= 14."""
    if g.n > EXHAUSTIVE_NODE_LIMIT:
        raise OracleLimitExceeded(f"exhaustive oracle limited to n <= {EXHAUSTIVE_NODE_LIMIT}")
    nodes = list(g.nodes)
    anchor, rest = nodes[0], nodes[1:]
    best_val = None
    best_side: frozenset[int] = frozenset()
    for mask in range(1 << len(rest)):
        side = {anchor} | {rest[i] for i in range(len(rest)) if mask >> i & 1}
        if len(side) == g.n:
            continue
        val = sum(e.weight for e in g.edges if (e.u in side) != (e.v in side))
        if best_val is None or val < best_val:
            best_val, best_side = val, frozenset(side)
    assert best_val is not None
    return best_val, best_side


def stoer_wagner_min_cut(g: WeightedGraph) -> tuple[int, frozenset[int]]:
    """Classic O(n^3) global min-cut with maximum-adjacency phases."""
    n = g.n
    if n < 2:
        raise GraphError("min cut needs at least two nodes")
    nodes = list(g.nodes)
    pos = {x: i for i, x in enumerate(nodes)}
    w = np.zeros((n, n), dtype=np.int64)
    for e in g.edges:
        w[pos[e.u], pos[e.v]] += e.weight
        w[pos[e.v], pos[e.u]] += e.weight

    merged: list[list[int]] = [[x] for x in nodes]
    active = list(range(n))
    best_val = None
    best_side: frozenset[int] = frozenset()

    while len(active) > 1:
        a = active[0]
        in_a = np.zeros(n, dtype=bool)
        in_a[a] = True
        weights = w[a].copy()
        order = [a]
        for _ in range(len(active) - 1):
            weights_masked = np.where(in_a, -1, weights)
            mask = np.zeros(n, dtype=bool)
            mask[active] = True
            weights_masked = np.where(mask, weights_masked, -1)
            nxt = int(weights_masked.argmax())
            order.append(nxt)
            in_a[nxt] = True
            weights = weights + w[nxt]
        s, tt = order[-2], order[-1]
        cut_of_phase = int(w[tt][np.array(order[:-1], dtype=np.intp)].sum())
        if best_val is None or cut_of_phase < best_val:
            best_val = cut_of_phase
            best_side = frozenset(merged[tt])
        # merge t into s
        w[s] += w[tt]
        w[:, s] += w[:, tt]
        w[s, s] = 0
        merged[s] = merged[s] + merged[tt]
        active.remove(tt)
    assert best_val is not None
    return best_val, best_side


def oracle_min_cut(
    g: WeightedGraph, limit: int = ORACLE_NODE_LIMIT
) -> tuple[int, frozenset[int]]:
    """Globally minimum weighted cut value and one side of an optimal
    partition. Stoer-Wagner up to the node limit."""
    if g.n > limit:
        raise OracleLimitExceeded(f"oracle limited to n <= {limit} (got {g.n})")
    return stoer_wagner_min_cut(g)


def partition_cut_value(g: WeightedGraph, side) -> int:
    s = set(side)
    return sum(e.weight for e in g.edges if (e.u in s) != (e.v in s))
