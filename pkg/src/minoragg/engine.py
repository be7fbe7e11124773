"""The Minor-Aggregation round engine.

A round has three steps, in order: contraction (an edge subset is contracted,
its connected components become supernodes), consensus (each supernode
aggregates its members' inputs with one operator and every member learns the
result), and aggregation (each surviving edge emits a value toward each
endpoint supernode, which aggregates them with a second operator).

Round programs are plain functions taking a :class:`MinorAggregation`
context. Node-disjoint programs cannot interact, so ``run_disjoint`` runs
them sequentially on induced subscopes and charges the lockstep maximum,
which is exactly the model's cost (shorter programs are padded with no-op
rounds). ``run_on_minor`` unions a fixed edge set into every round's
contraction at zero round overhead.

Every executed round increments the shared :class:`RoundLedger` by one and
is checked against the message bit budget.
"""

from __future__ import annotations

import json
import math
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Sequence

from .graphs import Edge, WeightedGraph
from .operators import NOOP, AggregationOperator

CONTRACT_ALL = "all"

DEFAULT_BIT_FACTOR = 32


class EngineError(RuntimeError):
    pass


class ScopeNotConnected(EngineError):
    pass


class SchedulingViolation(EngineError):
    pass


class BitBudgetExceeded(EngineError):
    pass


class InputViolation(EngineError):
    pass


def budget_bits(n: int, factor: int = DEFAULT_BIT_FACTOR) -> int:
    """B = ceil(factor * log2(n)^2); the paper leaves the constant open."""
    return math.ceil(factor * math.log2(max(n, 2)) ** 2)


@dataclass
class EngineConfig:
    budget: int
    strict_bits: bool = True
    check_bits: bool = True
    verify_consistency: bool = False  # expensive recheck, used by tests

    @classmethod
    def for_size(cls, n: int, factor: int = DEFAULT_BIT_FACTOR, **kw) -> "EngineConfig":
        return cls(budget=budget_bits(n, factor), **kw)


class RoundLedger:
    """Honest round accounting: one tick per executed round, a per-phase
    breakdown, and the bit-budget violation log."""

    def __init__(self):
        self.total_rounds = 0
        self.phases: dict[str, int] = {}
        self.violations: list[dict] = []
        self._stack: list[str] = []

    @property
    def current_phase(self) -> str:
        return self._stack[-1] if self._stack else "unlabeled"

    def tick(self, rounds: int = 1):
        if rounds < 0:
            raise EngineError("negative round charge")
        self.total_rounds += rounds
        label = self.current_phase
        self.phases[label] = self.phases.get(label, 0) + rounds

    @contextmanager
    def phase(self, label: str):
        self._stack.append(label)
        try:
            yield self
        finally:
            self._stack.pop()

    def record_violation(self, kind: str, bits: int, budget: int):
        self.violations.append(
            {"phase": self.current_phase, "kind": kind, "bits": bits, "budget": budget}
        )

    def to_json(self) -> dict:
        return {
            "total_rounds": self.total_rounds,
            "phases": [
                {"label": k, "rounds": v} for k, v in sorted(self.phases.items())
            ],
            "violations": list(self.violations),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2)


@dataclass
class RoundSpec:
    """One round: what to contract, what each node says, what each edge says.

    ``contract`` is None (nothing), CONTRACT_ALL, a frozenset of edge
    indices, or a predicate over edges. ``node_input`` maps nodes to values
    (missing nodes contribute the identity). ``edge_output`` is called as
    ``f(edge, sid_u, sid_v, y_u, y_v) -> (z_u, z_v) | None`` for every edge
    surviving contraction; returning None skips the edge.
    """

    contract: Any = None
    node_input: Optional[dict] = None
    node_op: Optional[AggregationOperator] = None
    edge_output: Optional[Callable] = None
    edge_op: Optional[AggregationOperator] = None


NOOP_ROUND = RoundSpec()  # contract nothing, identity operators


class MinorMap:
    """Node -> supernode-ID partition induced by a contraction set, plus the
    surviving (non-self-loop) minor edges."""

    def __init__(self, labels: dict[int, int], edges: Sequence[Edge]):
        self.labels = labels
        self._edges = edges

    def supernode_of(self, v: int) -> int:
        return self.labels[v]

    def minor_edges(self):
        for e in self._edges:
            a, b = self.labels[e.u], self.labels[e.v]
            if a != b:
                yield a, b, e

    def supernodes(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {}
        for v, s in self.labels.items():
            out.setdefault(s, []).append(v)
        return out


class RoundResult:
    __slots__ = ("minor", "y", "agg", "_node_op", "_edge_op")

    def __init__(self, minor: MinorMap, y: dict, agg: dict, node_op, edge_op):
        self.minor = minor
        self.y = y
        self.agg = agg
        self._node_op = node_op
        self._edge_op = edge_op

    def sid_at(self, v: int) -> int:
        return self.minor.labels[v]

    def y_at(self, v: int):
        ident = self._node_op.identity if self._node_op else None
        return self.y.get(self.minor.labels[v], ident)

    def agg_at(self, v: int):
        ident = self._edge_op.identity if self._edge_op else None
        return self.agg.get(self.minor.labels[v], ident)


class Scope:
    """A connected execution scope: node set, edge list, and a persistent
    minor contraction applied to every round."""

    def __init__(self, nodes: Iterable[int], edges: Sequence[Edge],
                 minor: frozenset[int] = frozenset()):
        self.nodes: tuple[int, ...] = tuple(sorted(nodes))
        self.node_set = frozenset(self.nodes)
        self.edges: tuple[Edge, ...] = tuple(edges)
        self.minor = minor
        self._label_cache: dict = {}
        self._incident: dict[int, list[Edge]] | None = None

    @classmethod
    def of_graph(cls, g: WeightedGraph) -> "Scope":
        return cls(g.nodes, g.edges)

    @property
    def n(self) -> int:
        return len(self.nodes)

    def max_edge_index(self) -> int:
        return max((e.index for e in self.edges), default=-1)

    def incident(self, v: int) -> list[Edge]:
        if self._incident is None:
            inc: dict[int, list[Edge]] = {x: [] for x in self.nodes}
            for e in self.edges:
                inc[e.u].append(e)
                inc[e.v].append(e)
            self._incident = inc
        return self._incident[v]

    def induced(self, nodes: Iterable[int]) -> "Scope":
        keep = frozenset(nodes)
        if not keep <= self.node_set:
            raise EngineError("induced node set escapes the scope")
        edges = [e for e in self.edges if e.u in keep and e.v in keep]
        minor = frozenset(e.index for e in edges) & self.minor
        return Scope(keep, edges, minor)

    def with_minor(self, extra: Iterable[int]) -> "Scope":
        return Scope(self.nodes, self.edges, self.minor | frozenset(extra))

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            x = stack.pop()
            for e in self.incident(x):
                y = e.other(x)
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return len(seen) == self.n

    # -- contraction labelings ------------------------------------------------

    def _components(self, contracted: Iterable[Edge]) -> dict[int, int]:
        parent: dict[int, int] = {}

        def find(x: int) -> int:
            root = x
            while parent.get(root, root) != root:
                root = parent[root]
            while parent.get(x, x) != x:
                parent[x], x = root, parent[x]
            return root

        for e in contracted:
            ra, rb = find(e.u), find(e.v)
            if ra != rb:
                if ra < rb:
                    parent[rb] = ra
                else:
                    parent[ra] = rb
        return {v: find(v) for v in self.nodes}

    def labels_for(self, contract) -> dict[int, int]:
        """Supernode labels (min member ID) for minor + requested edges."""
        if callable(contract):
            contract = frozenset(e.index for e in self.edges if contract(e))
        key = contract
        if isinstance(key, frozenset) and not key:
            key = None
        cached = self._label_cache.get(key)
        if cached is not None:
            return cached
        if key == CONTRACT_ALL:
            if not self.is_connected():
                raise ScopeNotConnected("cannot contract a disconnected scope")
            sid = self.nodes[0]
            labels = {v: sid for v in self.nodes}
        elif key is None and not self.minor:
            labels = {v: v for v in self.nodes}
        else:
            req = key or frozenset()
            eff = self.minor | req
            labels = self._components([e for e in self.edges if e.index in eff])
        self._label_cache[key] = labels
        return labels


class MinorAggregation:
    """Execution context binding a scope to a ledger and a bit budget."""

    def __init__(self, scope: Scope, ledger: RoundLedger, config: EngineConfig):
        self.scope = scope
        self.ledger = ledger
        self.config = config

    @classmethod
    def for_graph(cls, g: WeightedGraph, ledger: Optional[RoundLedger] = None,
                  config: Optional[EngineConfig] = None) -> "MinorAggregation":
        return cls(
            Scope.of_graph(g),
            ledger if ledger is not None else RoundLedger(),
            config if config is not None else EngineConfig.for_size(g.n),
        )

    @property
    def nodes(self) -> tuple[int, ...]:
        return self.scope.nodes

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self.scope.edges

    def _check_bits(self, kind: str, op: AggregationOperator, value):
        if not self.config.check_bits or value is None:
            return
        bits = op.size_bits(value)
        if bits > self.config.budget:
            self.ledger.record_violation(kind, bits, self.config.budget)
            if self.config.strict_bits:
                raise BitBudgetExceeded(
                    f"{kind} message of {bits} bits exceeds budget {self.config.budget}"
                )

    def round(self, spec: RoundSpec) -> RoundResult:
        """Execute one contraction/consensus/aggregation round."""
        labels = self.scope.labels_for(spec.contract)
        y: dict[int, Any] = {}
        node_op = spec.node_op
        if spec.node_input:
            items = spec.node_input.items()
            if node_op is None:
                raise EngineError("node_input given without node_op")
            if node_op.order_sensitive:
                items = sorted(items)
            check = self.config.check_bits
            for v, x in items:
                if x is None:
                    continue
                if check:
                    self._check_bits("consensus-input", node_op, x)
                s = labels[v]
                acc = y.get(s)
                y[s] = x if acc is None else node_op.combine(acc, x)
            if check:
                for val in y.values():
                    self._check_bits("consensus-output", node_op, val)

        agg: dict[int, Any] = {}
        edge_op = spec.edge_op
        if spec.edge_output is not None:
            if edge_op is None:
                raise EngineError("edge_output given without edge_op")
            out = spec.edge_output
            y_ident = node_op.identity if node_op else None
            check = self.config.check_bits
            for e in self.scope.edges:
                su, sv = labels[e.u], labels[e.v]
                if su == sv:
                    continue  # self-loop in the minor
                z = out(e, su, sv, y.get(su, y_ident), y.get(sv, y_ident))
                if z is None:
                    continue
                zu, zv = z
                if zu is not None:
                    if check:
                        self._check_bits("edge-output", edge_op, zu)
                    acc = agg.get(su)
                    agg[su] = zu if acc is None else edge_op.combine(acc, zu)
                if zv is not None:
                    if check:
                        self._check_bits("edge-output", edge_op, zv)
                    acc = agg.get(sv)
                    agg[sv] = zv if acc is None else edge_op.combine(acc, zv)
            if check:
                for val in agg.values():
                    self._check_bits("edge-aggregate", edge_op, val)

        if self.config.verify_consistency:
            self._verify_consistency(labels, y, agg)

        self.ledger.tick(1)
        minor = MinorMap(labels, self.scope.edges)
        return RoundResult(minor, y, agg, node_op, edge_op)

    def _verify_consistency(self, labels, y, agg):
        # every node resolves to a supernode, and supernode values exist only
        # for supernodes that are actually present
        sids = set(labels.values())
        for v in self.scope.nodes:
            if labels[v] not in sids:
                raise EngineError("inconsistent supernode labeling")
        for s in y:
            if s not in sids:
                raise EngineError("consensus value for unknown supernode")
        for s in agg:
            if s not in sids:
                raise EngineError("edge aggregate for unknown supernode")

    # -- convenience wrappers (each is exactly one round) ----------------------

    def global_value(self, op: AggregationOperator, inputs: dict) -> Any:
        """Contract everything; return the single supernode's consensus."""
        res = self.round(RoundSpec(contract=CONTRACT_ALL, node_input=inputs, node_op=op))
        return res.y_at(self.scope.nodes[0])

    def per_node_edge_agg(self, op: AggregationOperator, edge_output) -> dict[int, Any]:
        """No contraction; each node aggregates its incident edges."""
        res = self.round(RoundSpec(edge_output=edge_output, edge_op=op))
        return {v: res.agg_at(v) for v in self.scope.nodes}

    # -- composition ------------------------------------------------------------

    def run_on_minor(self, contracted: Iterable[int]) -> "MinorAggregation":
        """Context for the minor G/F: F joins every round's contraction set,
        at zero round overhead."""
        return MinorAggregation(self.scope.with_minor(contracted), self.ledger, self.config)

    def subcontext(self, nodes: Iterable[int], ledger: Optional[RoundLedger] = None
                   ) -> "MinorAggregation":
        return MinorAggregation(
            self.scope.induced(nodes),
            ledger if ledger is not None else self.ledger,
            self.config,
        )

    def run_disjoint(self, parts: Sequence[tuple[Iterable[int], Callable]]) -> list:
        """Run programs on node-disjoint connected subgraphs in lockstep.

        The ledger grows by the maximum of the children's round counts
        (shorter programs are implicitly padded with no-op rounds); each
        part's result is identical to running it alone, because disjoint
        scopes cannot interact.
        """
        materialized = [(frozenset(nodes), fn) for nodes, fn in parts]
        seen: set[int] = set()
        for nodes, _ in materialized:
            if nodes & seen:
                raise SchedulingViolation("parts overlap")
            seen |= nodes
        results = []
        deepest = 0
        for nodes, fn in materialized:
            sub_ledger = RoundLedger()
            sub = self.subcontext(nodes, ledger=sub_ledger)
            if not sub.scope.is_connected():
                raise SchedulingViolation("part does not induce a connected subgraph")
            results.append(fn(sub))
            deepest = max(deepest, sub_ledger.total_rounds)
            self.ledger.violations.extend(sub_ledger.violations)
        self.ledger.tick(deepest)
        return results
