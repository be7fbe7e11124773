"""Graph and tree data model shared by every stage of the pipeline.

All types are immutable after construction and safe to share. Node IDs are
small opaque integers; tree edges are addressed by their bottom endpoint
(the endpoint farther from the root), which stays stable when subtrees are
carved out during recursion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

# Virtual/synthetic node IDs are allocated from here upward so they can never
# collide with file-loaded IDs (the parser rejects IDs at or above this).
VIRTUAL_ID_BASE = 1 << 20

DEFAULT_WEIGHT_EXPONENT = 4


class GraphError(ValueError):
    pass


class GraphFormatError(GraphError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidTreeEdge(GraphError):
    pass


@dataclass(frozen=True)
class Edge:
    """An undirected weighted edge. ``index`` is unique within its graph and
    is the identity used by contraction sets and ledgers."""

    u: int
    v: int
    weight: int
    index: int

    def other(self, x: int) -> int:
        if x == self.u:
            return self.v
        if x == self.v:
            return self.u
        raise GraphError(f"node {x} is not an endpoint of edge {self.index}")

    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)

    def key(self) -> tuple[int, int]:
        return (self.u, self.v) if self.u <= self.v else (self.v, self.u)


class WeightedGraph:
    """Undirected connected multigraph with positive integer weights.

    Parallel edges are kept distinct; self-loops are rejected. Weights must
    satisfy 1 <= w <= n**C for the configured exponent C.
    """

    def __init__(
        self,
        nodes: Iterable[int],
        edges: Iterable[tuple[int, int, int]],
        weight_exponent: int = DEFAULT_WEIGHT_EXPONENT,
        check_weights: bool = True,
    ):
        node_list = sorted(nodes)
        if len(set(node_list)) != len(node_list):
            raise GraphError("duplicate node IDs")
        if any(x < 0 for x in node_list):
            raise GraphError("node IDs must be non-negative")
        self.nodes: tuple[int, ...] = tuple(node_list)
        self._node_set = frozenset(node_list)

        built = []
        for i, (u, v, w) in enumerate(edges):
            if u == v:
                raise GraphError(f"self-loop at node {u}")
            if u not in self._node_set or v not in self._node_set:
                raise GraphError(f"edge ({u},{v}) references unknown node")
            if not isinstance(w, int) or w < 1:
                raise GraphError(f"edge ({u},{v}) has non-positive weight {w}")
            built.append(Edge(u, v, w, i))
        self.edges: tuple[Edge, ...] = tuple(built)

        if check_weights and self.n > 1:
            cap = max(self.n, 2) ** weight_exponent
            for e in self.edges:
                if e.weight > cap:
                    raise GraphError(
                        f"edge weight {e.weight} exceeds n^{weight_exponent} = {cap}"
                    )

        self._incident: dict[int, list[Edge]] = {x: [] for x in self.nodes}
        for e in self.edges:
            self._incident[e.u].append(e)
            self._incident[e.v].append(e)

        if not self._connected():
            raise GraphError("graph is not connected")

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def m(self) -> int:
        return len(self.edges)

    def incident(self, x: int) -> Sequence[Edge]:
        return self._incident[x]

    def has_node(self, x: int) -> bool:
        return x in self._node_set

    def total_weight(self) -> int:
        return sum(e.weight for e in self.edges)

    def _connected(self) -> bool:
        if self.n <= 1:
            return True
        seen = {self.nodes[0]}
        stack = [self.nodes[0]]
        while stack:
            x = stack.pop()
            for e in self._incident[x]:
                y = e.other(x)
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        return len(seen) == self.n

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, m={self.m})"


class RootedTree:
    """A rooted spanning tree stored as a parent map.

    A tree edge is identified by its bottom endpoint: ``edge of v`` means
    {parent(v), v}. ``normalize_edge`` converts an unordered pair into that
    bottom-endpoint ID.
    """

    def __init__(self, parent: dict[int, Optional[int]], root: int):
        if parent.get(root, "missing") is not None:
            raise GraphError("root must map to None in the parent map")
        self.root = root
        self.parent: dict[int, Optional[int]] = dict(parent)
        self.nodes: tuple[int, ...] = tuple(sorted(parent))
        self._children: dict[int, list[int]] = {x: [] for x in self.nodes}
        for x, p in self.parent.items():
            if p is None:
                continue
            if p not in self.parent:
                raise GraphError(f"parent {p} of {x} is not a tree node")
            self._children[p].append(x)
        for c in self._children.values():
            c.sort()
        self._depth: dict[int, int] | None = None
        self._check_tree()

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[int, int]], root: int) -> "RootedTree":
        adj: dict[int, list[int]] = {}
        for u, v in edges:
            adj.setdefault(u, []).append(v)
            adj.setdefault(v, []).append(u)
        if root not in adj and adj:
            raise GraphError(f"root {root} not in tree edge set")
        parent: dict[int, Optional[int]] = {root: None}
        stack = [root]
        while stack:
            x = stack.pop()
            for y in adj.get(x, []):
                if y not in parent:
                    parent[y] = x
                    stack.append(y)
        if len(parent) != len(adj or {root: None}):
            raise GraphError("tree edges are not connected")
        return cls(parent, root)

    def _check_tree(self):
        seen = set()
        stack = [self.root]
        while stack:
            x = stack.pop()
            if x in seen:
                raise GraphError("cycle in parent map")
            seen.add(x)
            stack.extend(self._children[x])
        if len(seen) != len(self.nodes):
            raise GraphError("parent map does not span its node set")

    @property
    def n(self) -> int:
        return len(self.nodes)

    def children(self, x: int) -> Sequence[int]:
        return self._children[x]

    def depth(self, x: int) -> int:
        return self.depths()[x]

    def depths(self) -> dict[int, int]:
        if self._depth is None:
            d = {self.root: 0}
            stack = [self.root]
            while stack:
                x = stack.pop()
                for y in self._children[x]:
                    d[y] = d[x] + 1
                    stack.append(y)
            self._depth = d
        return self._depth

    def edge_bottoms(self) -> Iterator[int]:
        """All tree edges, as bottom-endpoint IDs."""
        return (x for x in self.nodes if x != self.root)

    def edge_pair(self, bottom: int) -> tuple[int, int]:
        p = self.parent.get(bottom)
        if p is None:
            raise InvalidTreeEdge(f"{bottom} is not the bottom of a tree edge")
        return (p, bottom)

    def normalize_edge(self, e) -> int:
        """Accept a bottom ID or an unordered (u, v) pair; return the bottom ID."""
        if isinstance(e, tuple):
            u, v = e
            if self.parent.get(v) == u:
                return v
            if self.parent.get(u) == v:
                return u
            raise InvalidTreeEdge(f"({u},{v}) is not a tree edge")
        if e not in self.parent or self.parent[e] is None:
            raise InvalidTreeEdge(f"{e} is not the bottom of a tree edge")
        return e

    def path_nodes(self, u: int, v: int) -> list[int]:
        """Nodes on the unique tree path from u to v (inclusive)."""
        d = self.depths()
        left, right = [], []
        a, b = u, v
        while d[a] > d[b]:
            left.append(a)
            a = self.parent[a]  # type: ignore[assignment]
        while d[b] > d[a]:
            right.append(b)
            b = self.parent[b]  # type: ignore[assignment]
        while a != b:
            left.append(a)
            right.append(b)
            a = self.parent[a]  # type: ignore[assignment]
            b = self.parent[b]  # type: ignore[assignment]
        return left + [a] + right[::-1]

    def path_edge_bottoms(self, u: int, v: int) -> list[int]:
        """Tree edges (bottom IDs) on the unique u-to-v path."""
        d = self.depths()
        out = []
        a, b = u, v
        while d[a] > d[b]:
            out.append(a)
            a = self.parent[a]  # type: ignore[assignment]
        while d[b] > d[a]:
            out.append(b)
            b = self.parent[b]  # type: ignore[assignment]
        while a != b:
            out.append(a)
            out.append(b)
            a = self.parent[a]  # type: ignore[assignment]
            b = self.parent[b]  # type: ignore[assignment]
        return out

    def subtree_nodes(self, x: int) -> list[int]:
        out = []
        stack = [x]
        while stack:
            y = stack.pop()
            out.append(y)
            stack.extend(self._children[y])
        return out

    def spans(self, g: WeightedGraph) -> bool:
        return set(self.nodes) == set(g.nodes)

    def edge_pairs(self) -> list[tuple[int, int]]:
        return [self.edge_pair(b) for b in self.edge_bottoms()]

    def __repr__(self) -> str:
        return f"RootedTree(n={self.n}, root={self.root})"


@dataclass(frozen=True)
class CutResult:
    """A cut certificate: the value plus the tree edge(s) realizing it.

    ``tree_edges`` holds bottom-endpoint IDs; a two-respecting result has two
    distinct entries. ``cut_edge_set`` optionally lists the graph edges
    crossing the cut.
    """

    value: int
    kind: str  # "one-respecting" | "two-respecting"
    tree_edges: tuple[int, ...]
    cut_edge_set: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("one-respecting", "two-respecting"):
            raise GraphError(f"bad cut kind {self.kind!r}")
        want = 1 if self.kind == "one-respecting" else 2
        if len(self.tree_edges) != want:
            raise GraphError("tree_edges arity does not match kind")
        if want == 2 and self.tree_edges[0] == self.tree_edges[1]:
            raise GraphError("two-respecting result needs distinct tree edges")

    def better_than(self, other: "CutResult | None") -> bool:
        if other is None:
            return True
        if self.value != other.value:
            return self.value < other.value
        return (self.kind, self.tree_edges) < (other.kind, other.tree_edges)


def min_result(*results: CutResult | None) -> CutResult | None:
    best: CutResult | None = None
    for r in results:
        if r is not None and r.better_than(best):
            best = r
    return best


# ---------------------------------------------------------------------------
# Text file format: `p <n> <m>` header, `e u v w` edges, optional `t u v`
# tree lines and `r <u>` root line. `#` starts a comment.
# ---------------------------------------------------------------------------

def parse_graph_text(
    text: str, weight_exponent: int = DEFAULT_WEIGHT_EXPONENT
) -> tuple[WeightedGraph, Optional[RootedTree]]:
    n = m = None
    edges: list[tuple[int, int, int]] = []
    tree_edges: list[tuple[int, int]] = []
    root: Optional[int] = None
    nodes: set[int] = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "p":
                if n is not None:
                    raise GraphFormatError("duplicate header", lineno)
                n, m = int(parts[1]), int(parts[2])
            elif tag == "e":
                u, v, w = int(parts[1]), int(parts[2]), int(parts[3])
                edges.append((u, v, w))
                nodes.add(u)
                nodes.add(v)
            elif tag == "t":
                tree_edges.append((int(parts[1]), int(parts[2])))
            elif tag == "r":
                root = int(parts[1])
            else:
                raise GraphFormatError(f"unknown line tag {tag!r}", lineno)
        except (IndexError, ValueError) as exc:
            if isinstance(exc, GraphFormatError):
                raise
            raise GraphFormatError(f"malformed {tag!r} line", lineno) from exc

    if n is None:
        raise GraphFormatError("missing `p <n> <m>` header")
    if m is not None and m != len(edges):
        raise GraphFormatError(f"header claims {m} edges, found {len(edges)}")
    if len(nodes) != n:
        raise GraphFormatError(f"header claims {n} nodes, found {len(nodes)}")
    if any(x >= VIRTUAL_ID_BASE for x in nodes):
        raise GraphFormatError(f"node IDs must be below {VIRTUAL_ID_BASE}")

    g = WeightedGraph(nodes, edges, weight_exponent=weight_exponent)

    tree: Optional[RootedTree] = None
    if tree_edges:
        if len(tree_edges) != n - 1:
            raise GraphFormatError(
                f"{len(tree_edges)} tree lines for {n} nodes (need {n - 1})"
            )
        keys = {e.key() for e in g.edges}
        for u, v in tree_edges:
            if (min(u, v), max(u, v)) not in keys:
                raise GraphFormatError(f"tree edge ({u},{v}) is not a graph edge")
        tree = RootedTree.from_edges(tree_edges, root if root is not None else min(nodes))
        if not tree.spans(g):
            raise GraphFormatError("tree lines do not span the graph")
    elif root is not None:
        raise GraphFormatError("`r` line without `t` lines")

    return g, tree


def load_graph_file(path, weight_exponent: int = DEFAULT_WEIGHT_EXPONENT):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_graph_text(fh.read(), weight_exponent=weight_exponent)


def write_graph_text(g: WeightedGraph, tree: Optional[RootedTree] = None) -> str:
    lines = [f"p {g.n} {g.m}"]
    lines += [f"e {e.u} {e.v} {e.weight}" for e in g.edges]
    if tree is not None:
        lines += [f"t {u} {v}" for u, v in tree.edge_pairs()]
        lines.append(f"r {tree.root}")
    return "\n".join(lines) + "\n"


def log2_floor(x: int) -> int:
    return max(x, 1).bit_length() - 1


def log2_ceil(x: int) -> int:
    return (max(x, 1) - 1).bit_length()
