import random

import pytest

from conftest import gnp_graph, random_spanning_tree
from minoragg.engine import (
    CONTRACT_ALL,
    EngineConfig,
    MinorAggregation,
    RoundLedger,
    RoundSpec,
    Scope,
)
from minoragg.graphs import RootedTree, WeightedGraph
from minoragg.oracles import cut_value_pair
from minoragg.operators import MAX, MIN, OR, SUM
from minoragg.virtual import (
    MustUseSeparableFallback,
    VirtualContext,
    VirtualGraph,
    devirtualize_scope,
    materialize,
    replace_with_virtual,
    simulate_virtual,
    virtual_graph,
)


def ctx_of(g):
    return MinorAggregation.for_graph(g, config=EngineConfig.for_size(max(g.n, 64)))


def test_replace_with_virtual_triangle():
    g = WeightedGraph([1, 2, 3], [(1, 2, 4), (2, 3, 5), (1, 3, 6)])
    ctx = ctx_of(g)
    vg = replace_with_virtual(ctx, 1)
    assert vg.virtual_nodes == (1,)
    assert sorted((e.key(), e.weight) for e in vg.virtual_edges) == [
        ((1, 2), 4), ((1, 3), 6)]
    assert set(vg.base.nodes) == {2, 3}
    assert ctx.ledger.total_rounds == 2  # O(1) rounds


def test_replace_with_virtual_sums_parallel_edges():
    g = WeightedGraph([1, 2], [(1, 2, 2), (1, 2, 3)])
    ctx = ctx_of(g)
    vg = replace_with_virtual(ctx, 1)
    assert [(e.key(), e.weight) for e in vg.virtual_edges] == [((1, 2), 5)]


def scope_graph(scope: Scope) -> WeightedGraph:
    return WeightedGraph(scope.nodes, [(e.u, e.v, e.weight) for e in scope.edges],
                         check_weights=False)


def test_replacement_preserves_nonincident_cut_values(rng):
    for _ in range(10):
        g = gnp_graph(rng, 8, 0.6)
        t = random_spanning_tree(rng, g)
        leaf = next(x for x in g.nodes
                    if not t.children(x) and x != t.root)
        ctx = ctx_of(g)
        vg = replace_with_virtual(ctx, leaf)
        g2 = scope_graph(materialize(vg))
        bottoms = [b for b in t.edge_bottoms()
                   if b != leaf and t.parent[b] != leaf]
        for e in bottoms:
            assert cut_value_pair(g, t, e) == cut_value_pair(g2, t, e)
            for f in bottoms:
                if f > e:
                    assert cut_value_pair(g, t, e, f) == cut_value_pair(g2, t, e, f)


def test_devirtualize_identity_and_fallback():
    g = WeightedGraph([1, 2, 3], [(1, 2, 1), (2, 3, 1)])
    base = Scope.of_graph(g)
    assert devirtualize_scope(VirtualGraph(base, (), ())) is base

    # virtual node 9 bridges two otherwise-disconnected halves
    g2 = WeightedGraph([1, 2, 3, 4], [(1, 2, 1), (3, 4, 1), (2, 3, 1)])
    sub = Scope.of_graph(g2).induced([1, 2, 3, 4])
    broken = Scope(sub.nodes, [e for e in sub.edges if e.key() != (2, 3)])
    vg = virtual_graph(broken, [(9, [(2, 1), (3, 1)])])
    with pytest.raises(MustUseSeparableFallback):
        devirtualize_scope(vg)


def leader_election(ctx):
    return ctx.global_value(MIN, {v: v for v in ctx.nodes})


def test_leader_election_includes_virtual_node():
    # path 2-3-4 plus virtual node 1 attached to 2 and 4
    g = WeightedGraph([2, 3, 4], [(2, 3, 1), (3, 4, 1)])
    ctx = ctx_of(g)
    vg = virtual_graph(ctx.scope, [(1, [(2, 1), (4, 1)])])
    got = simulate_virtual(ctx, vg, leader_election)
    # reference: materialized graph
    mctx = MinorAggregation.for_graph(scope_graph(materialize(vg)))
    assert got == leader_election(mctx) == 1


def test_beta_zero_blowup_at_most_two():
    g = gnp_graph(random.Random(1), 8, 0.5)
    ctx = ctx_of(g)
    vg = VirtualGraph(ctx.scope, (), ())

    def five_rounds(c):
        for _ in range(5):
            val = c.global_value(SUM, {v: 1 for v in c.nodes})
        return val

    before = ctx.ledger.total_rounds
    assert simulate_virtual(ctx, vg, five_rounds) == g.n
    assert ctx.ledger.total_rounds - before <= 2 * 5


def random_round_program(seed, rounds=5):
    """A deterministic program of `rounds` random rounds over commutative
    operators; returns the full per-node transcript."""

    def algo(ctx):
        rng = random.Random(seed)
        nodes = list(ctx.nodes)
        transcript = []
        carry = {v: (v * 7 + 3) % 23 for v in nodes}
        for rnd in range(rounds):
            mode = rng.choice(["none", "all", "some"])
            if mode == "none":
                contract = None
            elif mode == "all":
                contract = CONTRACT_ALL
            else:
                picks = frozenset(
                    e.index for e in ctx.edges if rng.random() < 0.4)
                contract = picks or None
            op = rng.choice([SUM, MIN, MAX, OR])
            if op is OR:
                inputs = {v: bool((carry[v] + rnd) % 3 == 0) for v in nodes}
            else:
                inputs = {v: carry[v] + rnd for v in nodes}
            want_edges = rng.random() < 0.7
            spec = RoundSpec(
                contract=contract,
                node_input=inputs,
                node_op=op,
                edge_output=(lambda e, a, b, ya, yb: (e.weight + (b % 5), e.weight + (a % 5)))
                if want_edges else None,
                edge_op=SUM if want_edges else None,
            )
            res = ctx.round(spec)
            row = []
            for v in nodes:
                row.append((v, res.sid_at(v), res.y_at(v), res.agg_at(v)))
                if op is not OR:
                    y = res.y_at(v)
                    carry[v] = (carry[v] + (y if isinstance(y, int) else 0)) % 1009
            transcript.append(row)
        return transcript

    return algo


def random_virtual_attachment(rng, base: Scope, beta: int) -> VirtualGraph:
    vids = sorted(rng.sample(range(500, 600), beta))
    attachments = []
    for v in vids:
        k = rng.randint(1, min(3, base.n))
        nbrs = rng.sample(list(base.nodes), k)
        attachments.append((v, [(u, rng.randint(1, 5)) for u in sorted(nbrs)]))
    vv = []
    if beta >= 2 and rng.random() < 0.5:
        a, b = rng.sample(vids, 2)
        vv.append((min(a, b), max(a, b), rng.randint(1, 5)))
    return virtual_graph(base, attachments, vv)


def test_simulation_matches_materialized_random():
    # 20 random graphs, beta in {1,2,3}, random 5-round programs:
    # identical transcripts, ledger within 4*(beta+1) per round
    rng = random.Random(99)
    for trial in range(20):
        g = gnp_graph(rng, rng.randint(4, 9), 0.5)
        ctx = ctx_of(g)
        beta = rng.choice([1, 2, 3])
        vg = random_virtual_attachment(rng, ctx.scope, beta)
        algo = random_round_program(seed=1000 + trial, rounds=5)

        before = ctx.ledger.total_rounds
        got = simulate_virtual(ctx, vg, algo)
        used = ctx.ledger.total_rounds - before
        assert used <= 4 * (beta + 1) * 5, (trial, used, beta)

        mat = MinorAggregation.for_graph(scope_graph(materialize(vg)))
        want = algo(mat)
        assert got == want, f"transcript mismatch on trial {trial}"


def test_virtual_nodes_processed_in_ascending_order_is_deterministic():
    rng = random.Random(5)
    g = gnp_graph(rng, 6, 0.6)
    ctx1 = ctx_of(g)
    vg1 = random_virtual_attachment(random.Random(7), ctx1.scope, 2)
    r1 = simulate_virtual(ctx1, vg1, random_round_program(3))
    ctx2 = ctx_of(g)
    vg2 = random_virtual_attachment(random.Random(7), ctx2.scope, 2)
    r2 = simulate_virtual(ctx2, vg2, random_round_program(3))
    assert r1 == r2
    assert ctx1.ledger.total_rounds == ctx2.ledger.total_rounds
