"""Deterministic tree toolkit, written as honest round programs.

Everything here charges real engine rounds: star-merging via Cole-Vishkin
3-coloring of out-degree-one graphs, numbered-path prefix/suffix sums via
halving recursion, heavy-light subtree/ancestor sums as per-depth path
sweeps, rooted heavy-light construction and tree orienting via star-merge
phases, LCA from heavy-light labels, and centroid finding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .engine import (
    CONTRACT_ALL,
    EngineError,
    InputViolation,
    MinorAggregation,
    RoundSpec,
)
from .graphs import Edge, log2_floor
from .operators import (
    MAX,
    MIN,
    SUM,
    AggregationOperator,
    concat_list,
    int_bits,
    tuple_bits,
)

COLE_VISHKIN_MAX_ITERATIONS = 10


# ---------------------------------------------------------------------------
# Heavy-light labels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LightRecord:
    """One light edge on a root-to-node path: endpoint IDs and depths."""

    top: int
    top_depth: int
    bottom: int
    bottom_depth: int

    def size_bits(self) -> int:
        return tuple_bits((self.top, self.top_depth, self.bottom, self.bottom_depth))


@dataclass(frozen=True)
class HLInfo:
    """Per-node heavy-light label: tree depth plus the depth-sorted list of
    light edges on the root-to-node path. Doubles as an LCA label."""

    depth: int
    light_list: tuple[LightRecord, ...] = ()

    @property
    def hl_depth(self) -> int:
        return len(self.light_list)

    def size_bits(self) -> int:
        return int_bits(self.depth) + 8 + sum(r.size_bits() for r in self.light_list)


def lca_from_hl(u: int, hu: HLInfo, v: int, hv: HLInfo) -> tuple[int, int]:
    """(ID, depth) of the LCA of u and v, from their HL-infos alone.

    Undefined if the infos come from different decompositions.
    """
    la, lb = hu.light_list, hv.light_list
    k = 0
    while k < len(la) and k < len(lb) and la[k] == lb[k]:
        k += 1
    if k < len(la) and k < len(lb):
        # paths diverge off a shared HL-path via two different light edges
        ra, rb = la[k], lb[k]
        if ra.top_depth <= rb.top_depth:
            return ra.top, ra.top_depth
        return rb.top, rb.top_depth
    if k == len(la) and k == len(lb):
        return (u, hu.depth) if hu.depth <= hv.depth else (v, hv.depth)
    if k == len(la):
        r = lb[k]
        return (u, hu.depth) if hu.depth <= r.top_depth else (r.top, r.top_depth)
    r = la[k]
    return (v, hv.depth) if hv.depth <= r.top_depth else (r.top, r.top_depth)


def is_ancestor(u: int, hu: HLInfo, v: int, hv: HLInfo) -> bool:
    return lca_from_hl(u, hu, v, hv)[0] == u


class ScopedTree:
    """A rooted tree living inside an execution scope: parent map plus the
    scope edge realizing each tree edge (keyed by bottom endpoint)."""

    def __init__(self, root: int, parent: dict[int, Optional[int]],
                 edge_of: dict[int, Edge]):
        self.root = root
        self.parent = parent
        self.edge_of = edge_of  # bottom node -> Edge
        self.nodes: tuple[int, ...] = tuple(sorted(parent))
        self._children: dict[int, list[int]] | None = None

    @classmethod
    def within(cls, ctx, root: int, parent: dict[int, Optional[int]]) -> "ScopedTree":
        edge_of = {}
        for v, p in parent.items():
            if p is None:
                continue
            edge_of[v] = edge_between(ctx.scope, v, p)
        return cls(root, parent, edge_of)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def children(self, x: int) -> list[int]:
        if self._children is None:
            ch: dict[int, list[int]] = {v: [] for v in self.nodes}
            for v, p in self.parent.items():
                if p is not None:
                    ch[p].append(v)
            for lst in ch.values():
                lst.sort()
            self._children = ch
        return self._children[x]

    def tree_edge_indices(self) -> frozenset[int]:
        return frozenset(e.index for e in self.edge_of.values())


def edge_between(scope, a: int, b: int) -> Edge:
    best = None
    for e in scope.incident(a):
        if e.other(a) == b and (best is None or e.index < best.index):
            best = e
    if best is None:
        raise EngineError(f"no scope edge between {a} and {b}")
    return best


# ---------------------------------------------------------------------------
# Deterministic star-merging (Cole-Vishkin)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StarMergePartition:
    """Receiver/joiner split: every joiner's out-edge points at a receiver
    and |J| >= |O| / 3 where O is the set of parts with an out-edge."""

    joiners: frozenset[int]
    receivers: frozenset[int]

    def is_joiner(self, part: int) -> bool:
        return part in self.joiners


SUM3 = AggregationOperator(
    "sum3", (0, 0, 0), lambda a, b: (a[0] + b[0], a[1] + b[1], a[2] + b[2])
)


def _cv_step(mine: int, theirs: int) -> int:
    x = mine ^ theirs
    i = (x & -x).bit_length() - 1
    return 2 * i + ((mine >> i) & 1)


def star_merge(ctx, part_of: dict[int, int], out_edge: dict[int, Edge]
               ) -> StarMergePartition:
    """Partition parts into joiners and receivers via deterministic
    3-coloring of the out-degree-one part graph.

    ``part_of`` maps each node to its part ID, which must be the part's
    minimum member ID; ``out_edge`` gives each out-degree-1 part its
    oriented out-edge, whose endpoints must lie in two different parts.
    Runs on the minor with inside-part edges contracted.
    """
    parts = sorted(set(part_of.values()))
    out_part: dict[int, int] = {}
    for p, e in out_edge.items():
        pu, pv = part_of[e.u], part_of[e.v]
        if pu == pv:
            raise InputViolation(f"out-edge of part {p} is a self-loop")
        if p not in (pu, pv):
            raise InputViolation(f"out-edge of part {p} does not touch it")
        out_part[p] = pv if pu == p else pu

    inside = frozenset(
        e.index for e in ctx.scope.edges if part_of[e.u] == part_of[e.v]
    )
    out_index: dict[int, list[int]] = {}  # two parts may share a mutual edge
    for p, e in out_edge.items():
        out_index.setdefault(e.index, []).append(p)

    color = {p: p for p in parts}

    def broadcast_round() -> dict[int, int]:
        """One round: each part with an out-edge learns its target's color."""

        def relay(e, su, sv, yu, yv):
            owners = out_index.get(e.index)
            if owners is None:
                return None
            zu = zv = None
            for owner in owners:
                if owner == su:
                    zu = yv
                if owner == sv:
                    zv = yu
            if zu is None and zv is None:
                return None
            return (zu, zv)

        res = ctx.round(RoundSpec(
            contract=inside,
            node_input={p: color[p] for p in parts}, node_op=MIN,
            edge_output=relay, edge_op=MIN,
        ))
        return {p: res.agg[p] for p in parts if p in res.agg}

    # bit-index reduction until all colors < 6 (log* rounds, capped)
    for _iteration in range(COLE_VISHKIN_MAX_ITERATIONS):
        maxc = ctx.global_value(MAX, {p: color[p] for p in parts})
        if maxc < 6:
            break
        heard = broadcast_round()
        color = {
            p: _cv_step(color[p], heard[p]) if p in out_part else (color[p] & 1)
            for p in parts
        }
    else:
        raise EngineError("Cole-Vishkin did not converge within the cap")

    # shift down and eliminate colors 5, 4, 3
    for c in (5, 4, 3):
        heard = broadcast_round()
        prior = dict(color)
        for p in parts:
            if p in out_part:
                color[p] = heard[p]
            else:
                color[p] = min(x for x in (0, 1, 2) if x != prior[p])
        heard = broadcast_round()
        for p in parts:
            if color[p] == c:
                blocked = {prior[p], heard.get(p)}
                color[p] = min(x for x in (0, 1, 2) if x not in blocked)

    # one round: count colors over O, most frequent color becomes joiners
    counts = ctx.global_value(SUM3, {
        p: tuple(1 if color[p] == k else 0 for k in range(3))
        for p in out_part
    })
    if counts is None:
        counts = (0, 0, 0)
    winner = max(range(3), key=lambda k: (counts[k], -k))
    joiners = frozenset(p for p in out_part if color[p] == winner)
    receivers = frozenset(p for p in parts if p not in joiners)

    n_out = len(out_part)
    if 3 * len(joiners) < n_out:
        raise EngineError("star-merge invariant |J| >= |O|/3 violated")
    for p in joiners:
        if out_part[p] not in receivers:
            raise EngineError("joiner points at another joiner")
    return StarMergePartition(joiners, receivers)


# ---------------------------------------------------------------------------
# Numbered-path prefix/suffix sums
# ---------------------------------------------------------------------------


def path_prefix_suffix(ctx, path: Sequence[int], inputs: dict,
                       op: AggregationOperator) -> tuple[dict, dict]:
    """Prefix and suffix aggregates along a path scope whose nodes know
    their index. Halving recursion; both directions in one pass."""
    path = list(path)
    if set(path) != set(ctx.scope.nodes):
        raise EngineError("path does not cover the scope")
    for a, b in zip(path, path[1:]):
        edge_between(ctx.scope, a, b)  # raises if not a path
    ctx.global_value(SUM, {v: 1 for v in path})  # everyone learns n
    return _pps(ctx, path, inputs, op)


def _pps(ctx, path: Sequence[int], inputs: dict, op: AggregationOperator
         ) -> tuple[dict, dict]:
    if len(path) == 1:
        v = path[0]
        x = inputs.get(v)
        return {v: x}, {v: x}
    half = len(path) // 2
    left, right = list(path[:half]), list(path[half:])
    (lp, ls), (rp, rs) = ctx.run_disjoint([
        (left, lambda c: _pps(c, left, inputs, op)),
        (right, lambda c: _pps(c, right, inputs, op)),
    ])

    bridge = edge_between(ctx.scope, left[-1], right[0])
    right_set = set(right)

    def contract_right(e: Edge) -> bool:
        return e.index == bridge.index or (e.u in right_set and e.v in right_set)

    p_w = lp[left[-1]]
    res = ctx.round(RoundSpec(contract=contract_right,
                              node_input={left[-1]: p_w} if p_w is not None else None,
                              node_op=op))
    got_p = res.y_at(right[0]) if p_w is not None else None

    left_set = set(left)

    def contract_left(e: Edge) -> bool:
        return e.index == bridge.index or (e.u in left_set and e.v in left_set)

    s_r = rs[right[0]]
    res = ctx.round(RoundSpec(contract=contract_left,
                              node_input={right[0]: s_r} if s_r is not None else None,
                              node_op=op))
    got_s = res.y_at(left[0]) if s_r is not None else None

    def merge(a, b):
        if a is None:
            return b
        if b is None:
            return a
        return op.combine(a, b)

    prefix = dict(lp)
    for v in right:
        prefix[v] = merge(got_p, rp[v])
    suffix = {v: merge(ls[v], got_s) for v in left}
    suffix.update(rs)
    return prefix, suffix


# ---------------------------------------------------------------------------
# Heavy-light subtree and ancestor sums
# ---------------------------------------------------------------------------


def _paths_at_depth(tree: ScopedTree, hl: dict[int, HLInfo], d: int
                    ) -> list[list[int]]:
    """Nodes of HL-depth d grouped into their (depth-ordered) HL-paths."""
    groups: dict[object, list[int]] = {}
    for v in tree.nodes:
        info = hl[v]
        if info.hl_depth != d:
            continue
        anchor = info.light_list[d - 1].bottom if d > 0 else tree.root
        groups.setdefault(anchor, []).append(v)
    out = []
    for anchor, nodes in sorted(groups.items()):
        nodes.sort(key=lambda v: hl[v].depth)
        for a, b in zip(nodes, nodes[1:]):
            if hl[b].depth != hl[a].depth + 1 or tree.parent.get(b) != a:
                raise EngineError("HL-depth class is not a clean path")
        out.append(nodes)
    return out


def hl_subtree_sum(ctx, tree: ScopedTree, hl: dict[int, HLInfo], inputs: dict,
                   op: AggregationOperator) -> dict:
    """s_v = aggregate of inputs over desc(v) (inclusive), bottom-up by
    HL-depth with per-depth path suffix sums."""
    if not hl:
        raise EngineError("missing HL info")
    maxd = ctx.global_value(MAX, {v: hl[v].hl_depth for v in tree.nodes})
    s: dict = {}

    def merge(a, b):
        if a is None:
            return b
        if b is None:
            return a
        return op.combine(a, b)

    for d in range(maxd, -1, -1):
        paths = _paths_at_depth(tree, hl, d)
        if not paths:
            continue
        at_depth = {v for p in paths for v in p}

        # one round: each node folds in the subtree sums of its light children
        def light_child_sum(e, su, sv, yu, yv, _at=at_depth):
            for child, par in ((e.u, e.v), (e.v, e.u)):
                if (tree.parent.get(child) == par and par in _at
                        and hl[child].hl_depth == d + 1
                        and tree.edge_of.get(child) is e):
                    val = s.get(child)
                    if val is None:
                        return None
                    return (None, val) if child == e.u else (val, None)
            return None

        res = ctx.round(RoundSpec(edge_output=light_child_sum, edge_op=op))
        x = {}
        for p in paths:
            for v in p:
                x[v] = merge(inputs.get(v), res.agg.get(v))

        results = ctx.run_disjoint([
            (p, (lambda c, p=p: _pps(c, p, x, op))) for p in paths
        ])
        for p, (_, suf) in zip(paths, results):
            for v in p:
                s[v] = suf[v]
    return s


def hl_ancestor_sum(ctx, tree: ScopedTree, hl: dict[int, HLInfo], inputs: dict,
                    op: AggregationOperator) -> dict:
    """p_v = aggregate of inputs over anc(v) (inclusive), top-down by
    HL-depth with per-depth path prefix sums seeded from the parent path."""
    if not hl:
        raise EngineError("missing HL info")
    maxd = ctx.global_value(MAX, {v: hl[v].hl_depth for v in tree.nodes})
    p_out: dict = {}

    def merge(a, b):
        if a is None:
            return b
        if b is None:
            return a
        return op.combine(a, b)

    for d in range(0, maxd + 1):
        paths = _paths_at_depth(tree, hl, d)
        if not paths:
            continue
        tops = {p[0] for p in paths}

        # one round: each path top learns the ancestor sum of its parent
        def seed_down(e, su, sv, yu, yv, _tops=tops):
            for child, par in ((e.u, e.v), (e.v, e.u)):
                if (tree.parent.get(child) == par and child in _tops
                        and tree.edge_of.get(child) is e):
                    val = p_out.get(par)
                    if val is None:
                        return None
                    return (val, None) if child == e.u else (None, val)
            return None

        seeds = {}
        if d > 0:
            res = ctx.round(RoundSpec(edge_output=seed_down, edge_op=op))
            seeds = {p[0]: res.agg.get(p[0]) for p in paths}

        results = ctx.run_disjoint([
            (p, (lambda c, p=p: _pps(c, p, inputs, op))) for p in paths
        ])
        for p, (pre, _) in zip(paths, results):
            seed = seeds.get(p[0])
            for v in p:
                p_out[v] = merge(seed, pre[v])
    return p_out


# ---------------------------------------------------------------------------
# Rooted heavy-light construction
# ---------------------------------------------------------------------------


def build_hl_rooted(ctx, tree: ScopedTree) -> dict[int, HLInfo]:
    """Heavy-light decomposition of an oriented tree: O(log n) star-merge
    phases; each phase recomputes the merged parts' subtree sizes and
    HL-infos from scratch through the previous labels as a path-numbering
    vehicle. Heavy ties break toward the smaller child ID."""
    nodes = tree.nodes
    part_of = {v: v for v in nodes}  # part ID = minimum member
    members: dict[int, list[int]] = {v: [v] for v in nodes}
    local_root = {v: v for v in nodes}
    hl = {v: HLInfo(0, ()) for v in nodes}  # part-local vehicle info

    max_phases = 2 * max(len(nodes), 2).bit_length() + 4
    for _phase in range(max_phases):
        parts = sorted(members)
        if len(parts) == 1:
            break

        # one round: edges learn their endpoints' parts; each non-root part
        # marks its parent edge in the contracted part graph
        ctx.round(RoundSpec(node_input={v: part_of[v] for v in nodes}, node_op=MIN))
        out_edge: dict[int, Edge] = {}
        for p in parts:
            r = local_root[p]
            par = tree.parent.get(r)
            if par is not None:
                out_edge[p] = tree.edge_of[r]

        labels = star_merge(ctx, part_of, out_edge)

        # merge joiners into their receiver parts
        merged_into: dict[int, list[int]] = {}
        for j in sorted(labels.joiners):
            e = out_edge[j]
            target = part_of[e.other(local_root[j])]
            merged_into.setdefault(target, []).append(j)

        # two rounds: attachment info crosses the attach edge, then floods
        # each joiner (attach depth offsets and receiver-side light lists)
        ctx.round(RoundSpec(node_input={v: hl[v].depth for v in nodes}, node_op=MIN))
        inside = frozenset(
            tree.edge_of[v].index for v in nodes
            if tree.parent.get(v) is not None and part_of[tree.parent[v]] == part_of[v]
        )
        ctx.round(RoundSpec(contract=inside))

        new_hl = dict(hl)
        for r_part, joiners in merged_into.items():
            for j in joiners:
                jr = local_root[j]
                attach = tree.parent[jr]
                e = tree.edge_of[jr]
                offset = hl[attach].depth + 1
                prefix = hl[attach].light_list + (LightRecord(
                    attach, hl[attach].depth, jr, offset),)
                for v in members[j]:
                    old = hl[v]
                    new_hl[v] = HLInfo(
                        old.depth + offset,
                        prefix + tuple(
                            LightRecord(rec.top, rec.top_depth + offset,
                                        rec.bottom, rec.bottom_depth + offset)
                            for rec in old.light_list
                        ),
                    )
        hl = new_hl

        # rebuild each merged part: bookkeeping first, then sizes and labels;
        # the part ID stays the minimum member so engine supernode IDs match
        rebuilt: list[int] = []
        for r_part, joiners in sorted(merged_into.items()):
            everyone = list(members[r_part])
            root_keep = local_root[r_part]
            del members[r_part], local_root[r_part]
            for j in joiners:
                everyone.extend(members[j])
                del members[j], local_root[j]
            new_id = min(everyone)
            members[new_id] = everyone
            local_root[new_id] = root_keep
            for v in everyone:
                part_of[v] = new_id
            rebuilt.append(new_id)

        def refresh(c, p=None):
            body = members[p]
            sub = ScopedTree(
                local_root[p],
                {v: (tree.parent[v] if v != local_root[p] else None) for v in body},
                {v: tree.edge_of[v] for v in body if v != local_root[p]},
            )
            sizes = hl_subtree_sum(c, sub, {v: hl[v] for v in body},
                                   {v: 1 for v in body}, SUM)
            return _relabel_part(c, sub, {v: hl[v] for v in body}, sizes)

        results = ctx.run_disjoint([
            (members[p], (lambda c, p=p: refresh(c, p))) for p in rebuilt
        ])
        for p, fresh in zip(rebuilt, results):
            hl.update(fresh)
    else:
        raise EngineError("heavy-light construction did not converge")

    limit = log2_floor(len(nodes))
    for v in nodes:
        if hl[v].hl_depth > limit:
            raise EngineError("light list exceeds the log2 bound")
    return hl


def _relabel_part(ctx, sub: ScopedTree, vehicle: dict[int, HLInfo],
                  sizes: dict[int, int]) -> dict[int, HLInfo]:
    """Given fresh subtree sizes, pick heavy children and recompute every
    node's HLInfo via one ancestor sum over the vehicle labeling."""
    # one round: each node learns (size, ID) of its children, picks the heavy one
    def size_up(e, su, sv, yu, yv):
        for child, par in ((e.u, e.v), (e.v, e.u)):
            if sub.parent.get(child) == par and sub.edge_of.get(child) is e:
                msg = (sizes[child], child)
                return (None, msg) if child == e.u else (msg, None)
        return None

    heavy_pick = AggregationOperator(
        "heavy-pick", None,
        lambda a, b: a if (a[0], -a[1]) >= (b[0], -b[1]) else b,
    )
    res = ctx.round(RoundSpec(edge_output=size_up, edge_op=heavy_pick))
    heavy_child = {}
    for v in sub.nodes:
        got = res.agg.get(v)
        if got is not None:
            heavy_child[v] = got[1]

    depth = {v: vehicle[v].depth for v in sub.nodes}
    own_record = {}
    for v in sub.nodes:
        par = sub.parent.get(v)
        if par is None:
            own_record[v] = ()
        elif heavy_child.get(par) == v:
            own_record[v] = ()
        else:
            own_record[v] = (LightRecord(par, depth[par], v, depth[v]),)

    lists = hl_ancestor_sum(ctx, sub, vehicle, own_record, concat_list())
    return {v: HLInfo(depth[v], tuple(lists.get(v) or ())) for v in sub.nodes}


# ---------------------------------------------------------------------------
# Orienting an unrooted tree
# ---------------------------------------------------------------------------


def orient_and_hl(ctx, tree_edges: Sequence[Edge], r: int
                  ) -> tuple[ScopedTree, dict[int, HLInfo]]:
    """Orient an unrooted tree toward r and build its heavy-light
    decomposition: star-merge phases; joiners re-root along their
    attachment path (identified with part-local LCA labels), and each
    merged part rebuilds its heavy-light decomposition from scratch.
    """
    tree_edges = list(tree_edges)
    adj: dict[int, list[tuple[int, Edge]]] = {}
    for e in tree_edges:
        adj.setdefault(e.u, []).append((e.v, e))
        adj.setdefault(e.v, []).append((e.u, e))
    nodes = sorted(adj) if adj else [r]
    if r not in adj and len(nodes) > 1:
        raise EngineError("root is not on the tree")

    part_of = {v: v for v in nodes}
    members: dict[int, list[int]] = {v: [v] for v in nodes}
    local_root = {v: v for v in nodes}
    parent: dict[int, Optional[int]] = {v: None for v in nodes}
    hl = {v: HLInfo(0, ()) for v in nodes}

    max_phases = 2 * max(len(nodes), 2).bit_length() + 4
    for _phase in range(max_phases):
        parts = sorted(members)
        if len(parts) == 1:
            break

        # one round: parts mark an arbitrary (minimum-index) outgoing edge
        ctx.round(RoundSpec(node_input={v: part_of[v] for v in nodes}, node_op=MIN))
        out_edge: dict[int, Edge] = {}
        for p in parts:
            if p == part_of[r]:
                continue  # the root part never marks an edge
            best = None
            for v in members[p]:
                for w, e in adj[v]:
                    if part_of[w] != p and (best is None or e.index < best.index):
                        best = e
            out_edge[p] = best  # a tree is connected: always found

        labels = star_merge(ctx, part_of, out_edge)

        merged_into: dict[int, list[int]] = {}
        for j in sorted(labels.joiners):
            e = out_edge[j]
            u_i = e.u if part_of[e.u] == j else e.v
            target = part_of[e.other(u_i)]
            merged_into.setdefault(target, []).append((j, u_i, e.other(u_i)))

        # two rounds: each joiner floods the HL-info of its attachment node
        # u_i so members can test "am I on the root-to-u_i path" locally
        ctx.round(RoundSpec(node_input={v: part_of[v] for v in nodes}, node_op=MIN))
        inside = frozenset(
            e.index for e in tree_edges if part_of[e.u] == part_of[e.v]
        )
        ctx.round(RoundSpec(contract=inside))

        rebuilt = []
        for r_part, joins in sorted(merged_into.items()):
            everyone = list(members[r_part])
            root_keep = local_root[r_part]
            del members[r_part], local_root[r_part]
            for j, u_i, u_j in joins:
                # reverse the orientation along the joiner's local_root -> u_i
                chain = [u_i]
                while chain[-1] != local_root[j]:
                    chain.append(parent[chain[-1]])  # type: ignore[arg-type]
                for above, below in zip(chain[1:], chain[:-1]):
                    parent[above] = below
                parent[u_i] = u_j
                everyone.extend(members[j])
                del members[j], local_root[j]
            new_id = min(everyone)
            members[new_id] = everyone
            local_root[new_id] = root_keep
            for v in everyone:
                part_of[v] = new_id
            rebuilt.append(new_id)

        def refresh(c, p=None):
            body = members[p]
            root_p = local_root[p]
            sub = ScopedTree.within(
                c, root_p,
                {v: (parent[v] if v != root_p else None) for v in body},
            )
            return build_hl_rooted(c, sub)

        results = ctx.run_disjoint([
            (members[p], (lambda c, p=p: refresh(c, p))) for p in rebuilt
        ])
        for p, fresh in zip(rebuilt, results):
            hl.update(fresh)
    else:
        raise EngineError("orientation did not converge")

    final_root = local_root[part_of[r]]
    if final_root != r:
        raise EngineError("root part lost the root")
    tree = ScopedTree.within(ctx, r, parent)
    return tree, hl


# ---------------------------------------------------------------------------
# Centroid
# ---------------------------------------------------------------------------


def find_centroid(ctx, tree: ScopedTree, hl: dict[int, HLInfo],
                  sizes: Optional[dict[int, int]] = None) -> int:
    """Minimum-ID node whose removal leaves components of size <= n/2."""
    if sizes is None:
        sizes = hl_subtree_sum(ctx, tree, hl, {v: 1 for v in tree.nodes}, SUM)
    n = sizes[tree.root]

    # one round: each node learns its largest child subtree
    def size_up(e, su, sv, yu, yv):
        for child, par in ((e.u, e.v), (e.v, e.u)):
            if tree.parent.get(child) == par and tree.edge_of.get(child) is e:
                return (None, sizes[child]) if child == e.u else (sizes[child], None)
        return None

    res = ctx.round(RoundSpec(edge_output=size_up, edge_op=MAX))
    candidates = {}
    for v in tree.nodes:
        biggest = max(res.agg.get(v) or 0, n - sizes[v])
        if 2 * biggest <= n:
            candidates[v] = v
    winner = ctx.global_value(MIN, candidates)
    if winner is None:
        raise EngineError("no centroid found")
    return winner
