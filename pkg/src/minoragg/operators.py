"""Aggregation operators: the message algebras rounds are allowed to use.

An operator combines two messages into one and declares how many bits its
messages occupy, so the engine can police the per-round bit budget. All
message values are immutable Python objects; ``combine`` must never mutate
its arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable


class OperatorError(ValueError):
    pass


def int_bits(x: int) -> int:
    # byte-aligned two's-complement payload plus a one-byte length prefix
    return max(8 * ((x.bit_length() + 8) // 8), 8) + 8


def tuple_bits(t) -> int:
    return 8 + sum(value_bits(x) for x in t)


def value_bits(x) -> int:
    if x is None or isinstance(x, bool):
        return 8
    if isinstance(x, int):
        return int_bits(x)
    if isinstance(x, (tuple, list)):
        return tuple_bits(x)
    if isinstance(x, frozenset):
        return tuple_bits(sorted(x))
    if isinstance(x, HeavyHitterSketch):
        return x.size_bits()
    if hasattr(x, "size_bits"):
        return x.size_bits()
    raise OperatorError(f"no canonical encoding for {type(x).__name__}")


@dataclass(frozen=True)
class AggregationOperator:
    """A named binary aggregation with an identity and a bit budget hook.

    ``order_sensitive`` marks mergeable sketches whose exact output depends
    on the combine order; the engine then fixes a canonical ascending-ID
    order so runs stay reproducible.
    """

    name: str
    identity: Any
    combine: Callable[[Any, Any], Any]
    size_bits: Callable[[Any], int] = value_bits
    order_sensitive: bool = False

    def fold(self, values) -> Any:
        acc = None
        for v in values:
            acc = v if acc is None else self.combine(acc, v)
        return self.identity if acc is None else acc


SUM = AggregationOperator("sum", 0, lambda a, b: a + b)
MIN = AggregationOperator("min", None, lambda a, b: a if a <= b else b)
MAX = AggregationOperator("max", None, lambda a, b: a if a >= b else b)
OR = AggregationOperator("or", False, lambda a, b: a or b)
AND = AggregationOperator("and", True, lambda a, b: a and b)

# Identity operator for no-op padding rounds: contributes nothing.
NOOP = AggregationOperator("noop", None, lambda a, b: None)


def pair_op(first: AggregationOperator, second: AggregationOperator) -> AggregationOperator:
    """Componentwise product of two operators (messages are 2-tuples)."""

    def comb(a, b):
        fa, sa = a
        fb, sb = b
        f = fb if fa is None else fa if fb is None else first.combine(fa, fb)
        s = sb if sa is None else sa if sb is None else second.combine(sa, sb)
        return (f, s)

    return AggregationOperator(
        f"pair({first.name},{second.name})",
        (first.identity, second.identity),
        comb,
        order_sensitive=first.order_sensitive or second.order_sensitive,
    )


def bounded_union(cap: int, name: str = "union") -> AggregationOperator:
    """Set union over frozensets, capped at ``cap`` elements.

    Exceeding the cap raises: the callers rely on a structural bound (e.g.
    interest lists are O(log n)) and a blowout means the bound is violated.
    """

    def comb(a: frozenset, b: frozenset) -> frozenset:
        u = a | b
        if len(u) > cap:
            raise OperatorError(f"bounded union exceeded cap {cap}")
        return u

    return AggregationOperator(name, frozenset(), comb)


def dict_sum(name: str = "dict-sum") -> AggregationOperator:
    """Pointwise integer sum of small key->weight maps (stored as sorted
    tuples of pairs). Used to collect per-target deltas at a node."""

    def comb(a, b):
        d = dict(a)
        for k, v in b:
            d[k] = d.get(k, 0) + v
        return tuple(sorted(d.items()))

    return AggregationOperator(name, (), comb)


def concat_list(name: str = "concat") -> AggregationOperator:
    """Order-preserving concatenation of tuples (ancestor-list collection)."""
    return AggregationOperator(name, (), lambda a, b: a + b, order_sensitive=True)


# ---------------------------------------------------------------------------
# Misra-Gries heavy hitters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HeavyHitterSketch:
    """Misra-Gries summary with capacity h, mergeable in any order.

    ``counters`` under-estimate true frequencies by at most W/(h+1), where W
    is the total tracked weight. ``output()`` filters at W/h, which yields:
    every object with frequency > (2/h) W is reported, and nothing with
    frequency <= (1/h) W is.
    """

    h: int
    total: int = 0
    counters: tuple[tuple[int, int], ...] = ()

    def insert(self, key: int, weight: int = 1) -> "HeavyHitterSketch":
        return heavy_hitter_combine(
            self, HeavyHitterSketch(self.h, weight, ((key, weight),))
        )

    def estimate(self, key: int) -> int:
        for k, c in self.counters:
            if k == key:
                return c
        return 0

    def output(self) -> tuple[int, ...]:
        """Keys passing the W/h filter, ascending."""
        return tuple(k for k, c in self.counters if c * self.h > self.total)

    def size_bits(self) -> int:
        return int_bits(self.h) + int_bits(self.total) + tuple_bits(self.counters)


def heavy_hitter_combine(s1: HeavyHitterSketch, s2: HeavyHitterSketch) -> HeavyHitterSketch:
    """Merge two sketches: add counters pointwise, then subtract the
    (h+1)-th largest count from every counter and drop the non-positive."""
    if s1.h != s2.h:
        raise OperatorError(f"capacity mismatch: {s1.h} != {s2.h}")
    h = s1.h
    counts: dict[int, int] = dict(s1.counters)
    for k, c in s2.counters:
        counts[k] = counts.get(k, 0) + c
    if len(counts) > h:
        cut = sorted(counts.values(), reverse=True)[h]
        counts = {k: c - cut for k, c in counts.items() if c - cut > 0}
    return HeavyHitterSketch(h, s1.total + s2.total, tuple(sorted(counts.items())))


def heavy_hitter_op(h: int) -> AggregationOperator:
    return AggregationOperator(
        f"heavy-hitter(h={h})",
        HeavyHitterSketch(h),
        heavy_hitter_combine,
        order_sensitive=True,
    )
