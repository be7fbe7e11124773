import math
import random

import pytest

from conftest import gnp_graph, random_spanning_tree, random_tree, tree_as_graph
from minoragg.engine import (
    EngineConfig,
    InputViolation,
    MinorAggregation,
    RoundLedger,
)
from minoragg.graphs import RootedTree, WeightedGraph, log2_floor
from minoragg.operators import MIN, SUM, heavy_hitter_op, HeavyHitterSketch
from minoragg.treeprims import (
    HLInfo,
    LightRecord,
    ScopedTree,
    build_hl_rooted,
    find_centroid,
    hl_ancestor_sum,
    hl_subtree_sum,
    lca_from_hl,
    orient_and_hl,
    path_prefix_suffix,
    star_merge,
)


def ctx_of(g, n_hint=None):
    return MinorAggregation.for_graph(
        g, config=EngineConfig.for_size(n_hint or max(g.n, 64)))


def path_graph(n, start=1):
    nodes = list(range(start, start + n))
    return WeightedGraph(nodes, [(a, a + 1, 1) for a in nodes[:-1]]), nodes


# ---------------------------------------------------------------- reference
def reference_hl(t: RootedTree) -> dict[int, HLInfo]:
    """Sequential HL decomposition: DFS sizes, max-size heavy child with
    min-ID tie break, light lists down the tree."""
    sizes = {}
    for v in sorted(t.nodes, key=lambda x: -t.depth(x)):
        sizes[v] = 1 + sum(sizes[c] for c in t.children(v))
    heavy = {}
    for v in t.nodes:
        kids = t.children(v)
        if kids:
            heavy[v] = max(kids, key=lambda c: (sizes[c], -c))
    info = {t.root: HLInfo(0, ())}
    stack = [t.root]
    while stack:
        v = stack.pop()
        for c in t.children(v):
            lst = info[v].light_list
            if heavy.get(v) != c:
                lst = lst + (LightRecord(v, info[v].depth, c, info[v].depth + 1),)
            info[c] = HLInfo(info[v].depth + 1, lst)
            stack.append(c)
    return info


def scoped(ctx, t: RootedTree) -> ScopedTree:
    return ScopedTree.within(ctx, t.root, dict(t.parent))


# ---------------------------------------------------------------- lca
def naive_lca(t: RootedTree, u, v):
    au = set()
    x = u
    while x is not None:
        au.add(x)
        x = t.parent[x]
    x = v
    while x not in au:
        x = t.parent[x]
    return x


def test_lca_ancestor_and_siblings():
    t = RootedTree({1: None, 2: 1, 3: 1, 4: 2, 5: 2}, 1)
    hl = reference_hl(t)
    assert lca_from_hl(2, hl[2], 4, hl[4]) == (2, 1)  # ancestor case
    assert lca_from_hl(2, hl[2], 3, hl[3]) == (1, 0)  # siblings under root
    assert lca_from_hl(4, hl[4], 5, hl[5]) == (2, 1)


def test_lca_random_pairs(rng):
    checked = 0
    while checked < 10_000:
        t = random_tree(rng, rng.randint(2, 40))
        hl = reference_hl(t)
        for _ in range(50):
            u, v = rng.choice(t.nodes), rng.choice(t.nodes)
            want = naive_lca(t, u, v)
            got, got_depth = lca_from_hl(u, hl[u], v, hl[v])
            assert got == want and got_depth == t.depth(want)
            checked += 1


# ---------------------------------------------------------------- star merge
def test_star_merge_in_star():
    # all k leaves point at the center: J = leaves
    k = 6
    g = WeightedGraph(range(0, k + 1), [(0, i, 1) for i in range(1, k + 1)])
    ctx = ctx_of(g)
    out = {i: next(e for e in g.incident(i)) for i in range(1, k + 1)}
    part = star_merge(ctx, {v: v for v in g.nodes}, out)
    assert part.joiners == frozenset(range(1, k + 1))
    assert part.receivers == frozenset([0])


def test_star_merge_directed_path():
    g, nodes = path_graph(7)
    ctx = ctx_of(g)
    # node i points toward i+1
    out = {}
    for i in nodes[:-1]:
        out[i] = next(e for e in g.incident(i) if e.other(i) == i + 1)
    part = star_merge(ctx, {v: v for v in nodes}, out)
    assert len(part.joiners) >= math.ceil(6 / 3)
    for j in part.joiners:
        assert j in out
        assert out[j].other(j) in part.receivers


def test_star_merge_empty_o():
    g, nodes = path_graph(3)
    part = star_merge(ctx_of(g), {v: v for v in nodes}, {})
    assert part.joiners == frozenset()


def test_star_merge_rejects_self_loop():
    g, nodes = path_graph(3)
    ctx = ctx_of(g)
    e = g.edges[0]
    with pytest.raises(InputViolation):
        star_merge(ctx, {1: 1, 2: 1, 3: 3}, {1: e})  # edge inside part 1


def test_star_merge_random_out_graphs(rng):
    for _ in range(25):
        g = gnp_graph(rng, rng.randint(4, 16), 0.5)
        ctx = ctx_of(g)
        out = {}
        for v in g.nodes:
            if rng.random() < 0.8:
                out[v] = rng.choice(list(g.incident(v)))
        part = star_merge(ctx, {v: v for v in g.nodes}, out)
        assert part.joiners <= set(out)
        assert 3 * len(part.joiners) >= len(out)
        for j in part.joiners:
            assert out[j].other(j) in part.receivers
        assert ctx.ledger.violations == []


# ---------------------------------------------------------------- path sums
def test_path_prefix_suffix_examples():
    g, nodes = path_graph(4)
    ctx = ctx_of(g)
    pre, suf = path_prefix_suffix(ctx, nodes, {i: i for i in nodes}, SUM)
    assert [pre[i] for i in nodes] == [1, 3, 6, 10]
    assert [suf[i] for i in nodes] == [10, 9, 7, 4]


def test_path_prefix_min():
    g, nodes = path_graph(3)
    vals = dict(zip(nodes, [5, 1, 7]))
    pre, _ = path_prefix_suffix(ctx_of(g), nodes, vals, MIN)
    assert [pre[i] for i in nodes] == [5, 1, 1]


def test_path_prefix_suffix_long_vs_scan_and_rounds(rng):
    n = 200
    g, nodes = path_graph(n)
    ctx = ctx_of(g)
    vals = {v: rng.randint(-5, 50) for v in nodes}
    pre, suf = path_prefix_suffix(ctx, nodes, vals, SUM)
    acc = 0
    for v in nodes:
        acc += vals[v]
        assert pre[v] == acc
    acc = 0
    for v in reversed(nodes):
        acc += vals[v]
        assert suf[v] == acc
    assert ctx.ledger.total_rounds <= 4 * math.log2(n) ** 2


# ---------------------------------------------------------------- hl sums
def dfs_subtree_sums(t, vals, fold):
    out = {}
    for v in sorted(t.nodes, key=lambda x: -t.depth(x)):
        acc = vals[v]
        for c in t.children(v):
            acc = fold(acc, out[c])
        out[v] = acc
    return out


def test_subtree_sum_sizes(rng):
    for _ in range(10):
        t = random_tree(rng, rng.randint(2, 60))
        g = tree_as_graph(t)
        ctx = ctx_of(g)
        hl = reference_hl(t)
        s = hl_subtree_sum(ctx, scoped(ctx, t), hl, {v: 1 for v in t.nodes}, SUM)
        want = dfs_subtree_sums(t, {v: 1 for v in t.nodes}, lambda a, b: a + b)
        assert s == want
        assert s[t.root] == t.n


def test_ancestor_sum_depths(rng):
    for _ in range(10):
        t = random_tree(rng, rng.randint(2, 60))
        ctx = ctx_of(tree_as_graph(t))
        hl = reference_hl(t)
        p = hl_ancestor_sum(ctx, scoped(ctx, t), hl, {v: 1 for v in t.nodes}, SUM)
        assert p == {v: t.depth(v) + 1 for v in t.nodes}


def test_hl_sums_on_graph_scope_with_extra_edges(rng):
    # non-tree edges in the scope must not disturb the sums
    for _ in range(8):
        g = gnp_graph(rng, rng.randint(5, 30), 0.4)
        t = random_spanning_tree(rng, g)
        ctx = ctx_of(g)
        hl = reference_hl(t)
        vals = {v: rng.randint(0, 9) for v in t.nodes}
        s = hl_subtree_sum(ctx, scoped(ctx, t), hl, vals, SUM)
        assert s == dfs_subtree_sums(t, vals, lambda a, b: a + b)


def test_subtree_sum_heavy_hitter_matches_sequential(rng):
    for _ in range(5):
        t = random_tree(rng, rng.randint(3, 25))
        ctx = ctx_of(tree_as_graph(t))
        hl = reference_hl(t)
        op = heavy_hitter_op(4)
        vals = {v: HeavyHitterSketch(4, 1, ((v % 5, 1),)) for v in t.nodes}
        s = hl_subtree_sum(ctx, scoped(ctx, t), hl, vals, op)
        # totals are merge-order independent; counters keep the MG guarantee
        want_totals = dfs_subtree_sums(t, {v: 1 for v in t.nodes}, lambda a, b: a + b)
        for v in t.nodes:
            assert s[v].total == want_totals[v]
            exact = {}
            for w in self_and_descendants(t, v):
                exact[w % 5] = exact.get(w % 5, 0) + 1
            for key in s[v].output():
                assert exact.get(key, 0) * 4 > s[v].total


def self_and_descendants(t, v):
    out = [v]
    stack = [v]
    while stack:
        x = stack.pop()
        for c in t.children(x):
            out.append(c)
            stack.append(c)
    return out


# ---------------------------------------------------------------- hl build
def check_hl_valid(t: RootedTree, hl, n=None):
    n = n or t.n
    ref_sizes = dfs_subtree_sums(t, {v: 1 for v in t.nodes}, lambda a, b: a + b)
    for v in t.nodes:
        assert hl[v].depth == t.depth(v)
        assert len(hl[v].light_list) <= log2_floor(n)
    # exactly one heavy child per non-leaf; heavy child's subtree is maximal
    light_bottoms = {}
    for v in t.nodes:
        for rec in hl[v].light_list:
            light_bottoms[rec.bottom] = rec
    for v in t.nodes:
        kids = t.children(v)
        if not kids:
            continue
        heavies = [c for c in kids if c not in light_bottoms]
        assert len(heavies) == 1
        assert all(ref_sizes[heavies[0]] >= ref_sizes[c] for c in kids)


def test_build_hl_path_all_heavy():
    g, nodes = path_graph(9)
    t = RootedTree({nodes[0]: None, **{b: a for a, b in zip(nodes, nodes[1:])}},
                   nodes[0])
    ctx = ctx_of(g)
    hl = build_hl_rooted(ctx, scoped(ctx, t))
    assert all(hl[v].light_list == () for v in nodes)
    assert [hl[v].depth for v in nodes] == list(range(9))


def test_build_hl_perfect_binary_tree():
    parent = {1: None}
    for v in range(2, 32):
        parent[v] = v // 2
    t = RootedTree(parent, 1)
    ctx = ctx_of(tree_as_graph(t))
    hl = build_hl_rooted(ctx, scoped(ctx, t))
    check_hl_valid(t, hl)
    assert all(len(hl[v].light_list) <= 4 for v in t.nodes)


def test_build_hl_random_trees(rng):
    for _ in range(12):
        t = random_tree(rng, rng.randint(2, 50))
        ctx = ctx_of(tree_as_graph(t))
        hl = build_hl_rooted(ctx, scoped(ctx, t))
        check_hl_valid(t, hl)
        assert hl == reference_hl(t)  # min-ID tie break pins the decomposition
        assert ctx.ledger.violations == []


# ---------------------------------------------------------------- orienting
def bfs_parent(g_or_edges, r):
    adj = {}
    for e in g_or_edges:
        adj.setdefault(e.u, []).append(e.v)
        adj.setdefault(e.v, []).append(e.u)
    parent = {r: None}
    frontier = [r]
    while frontier:
        nxt = []
        for x in frontier:
            for y in adj.get(x, []):
                if y not in parent:
                    parent[y] = x
                    nxt.append(y)
        frontier = nxt
    return parent


def test_orient_star_and_middle_path():
    g = WeightedGraph([1, 2, 3, 4], [(2, 1, 1), (2, 3, 1), (2, 4, 1)])
    ctx = ctx_of(g)
    tree, hl = orient_and_hl(ctx, g.edges, 2)
    assert tree.parent == {2: None, 1: 2, 3: 2, 4: 2}

    g2, nodes = path_graph(5)
    ctx2 = ctx_of(g2)
    tree2, _ = orient_and_hl(ctx2, g2.edges, 3)
    assert tree2.parent == {3: None, 2: 3, 4: 3, 1: 2, 5: 4}


def test_orient_random_trees_match_bfs(rng):
    for _ in range(100):
        t = random_tree(rng, rng.randint(1, 40))
        g = tree_as_graph(t)
        r = rng.choice(t.nodes)
        ctx = ctx_of(g)
        tree, hl = orient_and_hl(ctx, g.edges, r)
        want = bfs_parent(g.edges, r)
        assert tree.parent == want
        rerooted = RootedTree(want, r)
        check_hl_valid(rerooted, hl)
        assert ctx.ledger.violations == []


# ---------------------------------------------------------------- centroid
def test_centroid_path_and_star():
    g, nodes = path_graph(5)
    t = RootedTree({1: None, 2: 1, 3: 2, 4: 3, 5: 4}, 1)
    ctx = ctx_of(g)
    assert find_centroid(ctx, scoped(ctx, t), reference_hl(t)) == 3

    star = RootedTree({1: None, 2: 1, 3: 1, 4: 1, 5: 1}, 1)
    ctx2 = ctx_of(tree_as_graph(star))
    assert find_centroid(ctx2, scoped(ctx2, star), reference_hl(star)) == 1


def test_centroid_random(rng):
    for _ in range(20):
        t = random_tree(rng, rng.randint(1, 45))
        ctx = ctx_of(tree_as_graph(t))
        c = find_centroid(ctx, scoped(ctx, t), reference_hl(t))
        # component sizes of t - c
        comp_sizes = []
        seen = {c}
        for start in t.nodes:
            if start in seen:
                continue
            size = 0
            stack = [start]
            seen.add(start)
            while stack:
                x = stack.pop()
                size += 1
                for y in list(t.children(x)) + [t.parent[x]]:
                    if y is not None and y not in seen and y != c:
                        seen.add(y)
                        stack.append(y)
            comp_sizes.append(size)
        assert all(2 * s <= t.n for s in comp_sizes)


def test_primitives_deterministic(rng):
    t = random_tree(rng, 30)
    g = tree_as_graph(t)

    def run():
        ctx = ctx_of(g)
        hl = build_hl_rooted(ctx, scoped(ctx, t))
        s = hl_subtree_sum(ctx, scoped(ctx, t), hl, {v: v for v in t.nodes}, SUM)
        return hl, s, ctx.ledger.total_rounds

    assert run() == run()
