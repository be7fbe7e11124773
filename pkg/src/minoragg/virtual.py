"""Virtual graphs: a base communication scope extended with up to beta
arbitrarily-connected virtual nodes, plus the round-for-round simulation
that runs any round program on the extended graph using only base rounds.

Storage rule: every (simulated) node knows the full virtual node list and
all virtual-virtual edges; a real-virtual edge is known only to its real
endpoint. The simulation of one extended round costs at most 4*(beta+1)
base rounds; rounds that provably need no communication for the virtual
side are skipped, which only lowers the constant.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .engine import (
    CONTRACT_ALL,
    EngineError,
    MinorAggregation,
    MinorMap,
    NOOP_ROUND,
    RoundResult,
    RoundSpec,
    Scope,
    ScopeNotConnected,
)
from .graphs import Edge, log2_ceil
from .operators import OR, AggregationOperator, SUM

VIRTUAL_SIM_KAPPA = 4  # asserted per-round blowup constant


class MustUseSeparableFallback(EngineError):
    """Removing the virtual nodes disconnects the scope; the caller must take
    the separable-instance branch instead of devirtualizing."""


class BetaCapExceeded(EngineError):
    pass


@dataclass(frozen=True)
class VirtualGraph:
    """Base scope plus virtual nodes and virtual edges (>= 1 virtual
    endpoint each). Virtual edge indices continue past the base's."""

    base: Scope
    virtual_nodes: tuple[int, ...]
    virtual_edges: tuple[Edge, ...]

    def __post_init__(self):
        vset = set(self.virtual_nodes)
        if vset & self.base.node_set:
            raise EngineError("virtual nodes overlap the base scope")
        for e in self.virtual_edges:
            if e.u not in vset and e.v not in vset:
                raise EngineError(f"virtual edge {e.index} has no virtual endpoint")
            for x in (e.u, e.v):
                if x not in vset and x not in self.base.node_set:
                    raise EngineError(f"virtual edge {e.index} references unknown node {x}")

    @property
    def beta(self) -> int:
        return len(self.virtual_nodes)

    @property
    def nodes(self) -> tuple[int, ...]:
        return tuple(sorted(self.base.nodes + self.virtual_nodes))

    def all_edges(self) -> tuple[Edge, ...]:
        return self.base.edges + self.virtual_edges

    def is_virtual(self, x: int) -> bool:
        return x in self.virtual_nodes

    def check_beta_cap(self, cap: Optional[int] = None):
        if cap is None:
            cap = log2_ceil(max(self.base.n, 2)) + 4
        if self.beta > cap:
            raise BetaCapExceeded(f"beta={self.beta} exceeds cap {cap}")


def virtual_graph(
    base: Scope,
    attachments: Sequence[tuple[int, Sequence[tuple[int, int]]]],
    vv_edges: Sequence[tuple[int, int, int]] = (),
    first_edge_index: Optional[int] = None,
) -> VirtualGraph:
    """Build a VirtualGraph. ``attachments`` lists, per virtual node, its
    (real-or-virtual neighbor, weight) pairs; ``vv_edges`` adds extra
    virtual-virtual edges as (u, v, w)."""
    idx = (base.max_edge_index() + 1) if first_edge_index is None else first_edge_index
    vnodes = tuple(sorted(v for v, _ in attachments))
    edges: list[Edge] = []
    for v, conns in sorted(attachments):
        for nb, w in conns:
            edges.append(Edge(v, nb, w, idx))
            idx += 1
    for u, v, w in vv_edges:
        edges.append(Edge(u, v, w, idx))
        idx += 1
    return VirtualGraph(base, vnodes, tuple(edges))


def materialize(vg: VirtualGraph) -> Scope:
    """The extended graph as a plain scope (virtual nodes made real);
    reference side of the transcript-equivalence tests."""
    return Scope(
        vg.base.nodes + vg.virtual_nodes,
        vg.base.edges + vg.virtual_edges,
        vg.base.minor,
    )


def devirtualize_scope(vg: VirtualGraph) -> Scope:
    """The base scope with every virtual node dropped, for callers that have
    restructured their work to avoid virtual nodes before returning."""
    if vg.beta == 0:
        return vg.base
    if not vg.base.is_connected():
        raise MustUseSeparableFallback(
            "base minus virtual nodes is disconnected"
        )
    return vg.base


def replace_with_virtual(ctx: MinorAggregation, v: int) -> VirtualGraph:
    """Replace node v with a virtual twin carrying the same ID; parallel
    edges to a common neighbor collapse into one edge of summed weight.

    Costs O(1) rounds: one broadcast of v's ID, one aggregation in which
    each neighbor sums its parallel edge weights to v.
    """
    if v not in ctx.scope.node_set:
        raise EngineError(f"{v} is not in the scope")
    ctx.global_value(OR, {v: True})  # broadcast: everyone learns the replaced ID

    def weight_toward_other(e, su, sv, yu, yv):
        if e.u == v:
            return (None, e.weight)
        if e.v == v:
            return (e.weight, None)
        return None

    res = ctx.round(RoundSpec(edge_output=weight_toward_other, edge_op=SUM))
    sums = {u: res.agg_at(u) for u in ctx.scope.nodes if u != v and res.agg_at(u)}

    rest = [x for x in ctx.scope.nodes if x != v]
    base = ctx.scope.induced(rest)
    return virtual_graph(
        base,
        [(v, sorted(sums.items()))],
        first_edge_index=ctx.scope.max_edge_index() + 1,
    )


class _Groups:
    """Connectivity of {real supernodes} u {virtual nodes} through contracted
    virtual edges; group ID is the minimum member ID (matching the engine's
    supernode canonicalization on the materialized graph)."""

    def __init__(self):
        self._parent: dict[int, int] = {}

    def _find(self, x: int) -> int:
        p = self._parent
        root = x
        while p.get(root, root) != root:
            root = p[root]
        while p.get(x, x) != x:
            p[x], x = root, p[x]
        return root

    def merge(self, a: int, b: int):
        ra, rb = self._find(a), self._find(b)
        if ra == rb:
            return
        if ra < rb:
            self._parent[rb] = ra
        else:
            self._parent[ra] = rb

    def group_of(self, x: int) -> int:
        return self._find(x)

    def members(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for x in set(self._parent) | set(self._parent.values()):
            out.setdefault(self._find(x), []).append(x)
        return out


class VirtualContext:
    """Round interface over a virtual graph, implemented with base rounds.

    Exposes the same ``round``/``nodes``/``edges`` surface as
    :class:`MinorAggregation`, so round programs run unchanged on either.
    """

    def __init__(self, base_ctx: MinorAggregation, vg: VirtualGraph,
                 beta_cap: Optional[int] = None):
        if not vg.base.is_connected():
            raise ScopeNotConnected("virtual simulation needs a connected base")
        vg.check_beta_cap(beta_cap)
        self.base_ctx = base_ctx
        self.vg = vg
        self.simulated_rounds = 0
        self._vnode_set = frozenset(vg.virtual_nodes)
        self._vedge_index = frozenset(e.index for e in vg.virtual_edges)
        self._owned: dict[int, list[Edge]] = {}  # real node -> its virtual edges
        self._vv_edges: list[Edge] = []
        for e in vg.virtual_edges:
            u_virt, v_virt = e.u in self._vnode_set, e.v in self._vnode_set
            if u_virt and v_virt:
                self._vv_edges.append(e)
            else:
                self._owned.setdefault(e.v if u_virt else e.u, []).append(e)
        for lst in self._owned.values():
            lst.sort(key=lambda e: e.index)

    @property
    def ledger(self):
        return self.base_ctx.ledger

    @property
    def config(self):
        return self.base_ctx.config

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.vg.nodes

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self.vg.all_edges()

    def global_value(self, op: AggregationOperator, inputs: dict):
        res = self.round(RoundSpec(contract=CONTRACT_ALL, node_input=inputs, node_op=op))
        return res.y_at(self.nodes[0])

    # ------------------------------------------------------------------

    def _resolve_contract(self, contract) -> tuple[Optional[frozenset], list[Edge]]:
        if contract is None:
            return None, []
        if contract == CONTRACT_ALL:
            real = frozenset(e.index for e in self.vg.base.edges)
            return real, list(self.vg.virtual_edges)
        if callable(contract):
            contract = frozenset(e.index for e in self.edges if contract(e))
        creal = frozenset(i for i in contract if i not in self._vedge_index)
        cvirt = [e for e in self.vg.virtual_edges if e.index in contract]
        return (creal or None), cvirt

    def round(self, spec: RoundSpec) -> RoundResult:
        self.simulated_rounds += 1
        base = self.base_ctx
        vg = self.vg
        if vg.beta == 0:
            return base.round(spec)

        rounds_before = base.ledger.total_rounds
        creal, cvirt = self._resolve_contract(spec.contract)
        base_labels = base.scope.labels_for(creal)

        # -- discover which supernodes touch which virtual nodes ----------
        vv_index = {e.index for e in self._vv_edges}
        groups = _Groups()
        by_vnode: dict[int, dict] = {}
        for e in cvirt:
            if e.index in vv_index:
                groups.merge(e.u, e.v)
            else:
                vn, real = (e.u, e.v) if e.u in self._vnode_set else (e.v, e.u)
                by_vnode.setdefault(vn, {})[real] = True
        if by_vnode:
            for vn in sorted(vg.virtual_nodes):
                inputs = by_vnode.get(vn)
                if not inputs:
                    continue
                res = base.round(RoundSpec(contract=creal, node_input=inputs, node_op=OR))
                for sid, flag in res.y.items():
                    if flag:
                        groups.merge(vn, sid)

        grouped_members = groups.members()
        in_group = {m for members in grouped_members.values() for m in members}

        def gsid_of_sid(s: int) -> int:
            return groups.group_of(s) if s in in_group else s

        def gsid(x: int) -> int:
            if x in self._vnode_set:
                return groups.group_of(x)
            return gsid_of_sid(base_labels[x])

        # -- consensus ------------------------------------------------------
        node_op = spec.node_op
        y_final: dict = {}
        if node_op is not None and spec.node_input:
            real_inputs = {
                u: x for u, x in spec.node_input.items() if u not in self._vnode_set
            }
            res1 = base.round(
                RoundSpec(contract=creal, node_input=real_inputs, node_op=node_op)
            )
            partials = res1.y
            for s, val in partials.items():
                if s not in in_group:
                    y_final[s] = val
            for gid in sorted(grouped_members):
                members = grouped_members[gid]
                real_sids = sorted(m for m in members if m not in self._vnode_set)
                if real_sids:
                    speak = {s: partials[s] for s in real_sids if s in partials}
                    val = base.global_value(node_op, speak)
                else:
                    val = node_op.identity
                for vn in sorted(m for m in members if m in self._vnode_set):
                    x = spec.node_input.get(vn)
                    if x is not None:
                        val = x if val == node_op.identity else node_op.combine(val, x)
                if val != node_op.identity:
                    y_final[gid] = val
        # lone virtual nodes: their input is globally known already
        if node_op is not None and spec.node_input:
            for vn in vg.virtual_nodes:
                if vn not in in_group:
                    x = spec.node_input.get(vn)
                    if x is not None:
                        y_final[vn] = x

        # -- aggregation ------------------------------------------------------
        edge_op = spec.edge_op
        agg_final: dict = {}
        if spec.edge_output is not None:
            if edge_op is None:
                raise EngineError("edge_output given without edge_op")
            y_ident = node_op.identity if node_op else None

            def y_of(gs):
                return y_final.get(gs, y_ident)

            zcache: dict[int, tuple] = {}

            def z_of(e: Edge):
                if e.index in zcache:
                    return zcache[e.index]
                gu, gv = gsid(e.u), gsid(e.v)
                z = None if gu == gv else spec.edge_output(e, gu, gv, y_of(gu), y_of(gv))
                zcache[e.index] = (gu, gv, z) if z is not None else None
                return zcache[e.index]

            # round for virtual-free supernodes: base edges via the engine's
            # aggregation step, owned virtual edges via the consensus slot
            def base_edge_out(e, su, sv, yu, yv):
                got = z_of(e)
                return None if got is None else got[2]

            vz_inputs: dict = {}
            for u, elist in self._owned.items():
                acc = None
                for e in elist:
                    got = z_of(e)
                    if got is None:
                        continue
                    gu, gv, (zu, zv) = got
                    mine = zu if e.u == u else zv
                    if mine is None:
                        continue
                    acc = mine if acc is None else edge_op.combine(acc, mine)
                if acc is not None:
                    vz_inputs[u] = acc
            res2 = base.round(
                RoundSpec(
                    contract=creal,
                    node_input=vz_inputs or None,
                    node_op=edge_op if vz_inputs else None,
                    edge_output=base_edge_out,
                    edge_op=edge_op,
                )
            )
            for s in set(base_labels.values()):
                if s in in_group:
                    continue
                parts = []
                if s in res2.agg:
                    parts.append(res2.agg[s])
                if s in res2.y:
                    parts.append(res2.y[s])
                if parts:
                    acc = parts[0]
                    for p in parts[1:]:
                        acc = edge_op.combine(acc, p)
                    agg_final[s] = acc

            # one whole-graph round per virtual group that has incident edges
            for gid in sorted(grouped_members):
                inputs: dict = {}
                for e in base.scope.edges:
                    got = z_of(e)
                    if got is None:
                        continue
                    gu, gv, (zu, zv) = got
                    if gu == gid and zu is not None:
                        u = e.u
                        inputs[u] = zu if u not in inputs else edge_op.combine(inputs[u], zu)
                    if gv == gid and zv is not None:
                        v = e.v
                        inputs[v] = zv if v not in inputs else edge_op.combine(inputs[v], zv)
                for u, elist in self._owned.items():
                    for e in elist:
                        got = z_of(e)
                        if got is None:
                            continue
                        gu, gv, (zu, zv) = got
                        side = None
                        if gsid(e.u) == gid and zu is not None:
                            side = zu
                        elif gsid(e.v) == gid and zv is not None:
                            side = zv
                        if side is not None:
                            inputs[u] = side if u not in inputs else edge_op.combine(inputs[u], side)
                vv_tail = []
                for e in self._vv_edges:
                    got = z_of(e)
                    if got is None:
                        continue
                    gu, gv, (zu, zv) = got
                    if gu == gid and zu is not None:
                        vv_tail.append(zu)
                    if gv == gid and zv is not None:
                        vv_tail.append(zv)
                if not inputs and not vv_tail:
                    continue
                val = base.global_value(edge_op, inputs) if inputs else edge_op.identity
                for z in vv_tail:
                    val = z if val == edge_op.identity else edge_op.combine(val, z)
                agg_final[gid] = val

            # lone virtual nodes: all their edges are simulated by real
            # owners; fold the aggregate they would hold (globally known)
            for vn in vg.virtual_nodes:
                if vn in in_group:
                    continue
                acc = None
                for e in sorted(self.vg.virtual_edges, key=lambda e: e.index):
                    got = z_of(e)
                    if got is None:
                        continue
                    gu, gv, (zu, zv) = got
                    mine = None
                    if gu == vn and zu is not None:
                        mine = zu
                    elif gv == vn and zv is not None:
                        mine = zv
                    if mine is not None:
                        acc = mine if acc is None else edge_op.combine(acc, mine)
                if acc is not None:
                    agg_final[vn] = acc

        if base.ledger.total_rounds == rounds_before:
            base.round(NOOP_ROUND)  # a simulated round costs at least one round

        labels_all = {u: gsid(u) for u in base.scope.nodes}
        for vn in vg.virtual_nodes:
            labels_all[vn] = groups.group_of(vn)
        minor = MinorMap(labels_all, self.edges)
        return RoundResult(minor, y_final, agg_final, node_op, edge_op)


def simulate_virtual(
    base_ctx: MinorAggregation,
    vg: VirtualGraph,
    algorithm: Callable[[VirtualContext], object],
    beta_cap: Optional[int] = None,
):
    """Run ``algorithm`` as if on the extended graph; assert the ledger grew
    by at most KAPPA * (beta + 1) base rounds per simulated round."""
    before = base_ctx.ledger.total_rounds
    vctx = VirtualContext(base_ctx, vg, beta_cap=beta_cap)
    with base_ctx.ledger.phase("virtual-sim"):
        result = algorithm(vctx)
    grew = base_ctx.ledger.total_rounds - before
    allowed = VIRTUAL_SIM_KAPPA * (vg.beta + 1) * max(vctx.simulated_rounds, 1)
    if grew > allowed:
        raise EngineError(
            f"virtual simulation used {grew} rounds for "
            f"{vctx.simulated_rounds} simulated rounds (beta={vg.beta}); "
            f"budget {allowed}"
        )
    return result
