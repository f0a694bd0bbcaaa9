"""
Physical selection — maps an optimized logical plan onto runtime operators
and the exchanges between partitioned fragments.

Each physical operator records its ``degree``: the number of partitions
its output stream is split into.  Exchanges sit wherever the degree or
the distribution changes; everything between two exchanges runs as one
fragment per partition.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum

from compiler.algebra import (
    Call,
    Expr,
    LogicalOperator,
    LogicalPlan,
    OpKind,
    Var,
    datascan_collection,
    format_expr,
    graft_source,
    live_variables,
    walk,
)
from compiler.join_rules import UNBRIDGE, unbridge
from errors import ConfigError, PhysicalPlanError
from settings import RunConfig
from xml_ingest import Catalog

log = logging.getLogger(__name__)


class PhysKind(str, Enum):
    EMPTY_SOURCE = "EMPTY-SOURCE"
    NESTED_SOURCE = "NESTED-SOURCE"
    PARTITIONED_SCAN = "PARTITIONED-SCAN"
    COLLECTION_SCAN = "COLLECTION-SCAN"
    SCALAR_ASSIGN = "SCALAR-ASSIGN"
    SELECT = "SELECT"
    UNNEST = "UNNEST"
    SUBPLAN = "SUBPLAN"
    STREAMING_AGGREGATE = "STREAMING-AGGREGATE"
    HYBRID_HASH_JOIN = "HYBRID-HASH-JOIN"
    NESTED_LOOP_JOIN = "NESTED-LOOP-JOIN"
    EXCHANGE = "EXCHANGE"
    RESULT_SINK = "RESULT-SINK"


class ExchangeKind(str, Enum):
    ONE_TO_ONE = "one-to-one"
    HASH_PARTITION = "hash-partition"
    BROADCAST = "broadcast"
    MERGE_TO_ONE = "merge-to-one"


class AggPhase(str, Enum):
    SINGLE = "single"
    LOCAL = "local"
    GLOBAL = "global"


@dataclass(frozen=True)
class PhysicalOperator:
    """
    ``join_keys`` pairs a key expression of input 0 with one of input 1;
    ``build`` is the input index the hash table is built from.  Exchanges
    carry their routing ``keys`` and a plan-unique ``op_id``.
    """

    kind: PhysKind
    inputs: tuple["PhysicalOperator", ...] = ()
    variables: tuple[int, ...] = ()
    expressions: tuple[Expr, ...] = ()
    nested: tuple["PhysicalOperator", ...] = ()
    degree: int = 1
    collection: str | None = None
    path: tuple[str, ...] = ()
    phase: AggPhase | None = None
    exchange: ExchangeKind | None = None
    keys: tuple[Expr, ...] = ()
    join_keys: tuple[tuple[Expr, Expr], ...] = ()
    build: int = 0
    op_id: int = 0

    @property
    def input(self) -> "PhysicalOperator":
        return self.inputs[0]


@dataclass(frozen=True)
class PhysicalPlan:
    root: PhysicalOperator
    partitions: int

    def operators(self) -> list[PhysicalOperator]:
        return list(walk_physical(self.root))

    def count(self, kind: PhysKind) -> int:
        return sum(1 for op in walk_physical(self.root) if op.kind is kind)


def walk_physical(op: PhysicalOperator):
    yield op
    for n in op.nested:
        yield from walk_physical(n)
    for i in op.inputs:
        yield from walk_physical(i)


# ── Join key recognition ─────────────────────────────────────────────

def _conjuncts(expr: Expr) -> list[Expr]:
    if isinstance(expr, Call) and expr.name == "and":
        out: list[Expr] = []
        for a in expr.args:
            out.extend(_conjuncts(a))
        return out
    return [expr]


def equi_keys(cond: Expr, left: set[int], right: set[int]) -> tuple[tuple[Expr, Expr], ...]:
    """Cross-branch ``equal($a, $b)`` conjuncts of a bridged condition, as (left, right) pairs."""
    pairs = []
    for c in _conjuncts(cond):
        if not (isinstance(c, Call) and c.name == "equal"):
            continue
        a, b = c.args
        if not (isinstance(a, Var) and isinstance(b, Var)):
            continue
        if a.id in left and b.id in right:
            pairs.append((a, b))
        elif b.id in left and a.id in right:
            pairs.append((b, a))
    return tuple(pairs)


def _is_bridged(expr: Expr) -> bool:
    return any(isinstance(c, Call) and c.name in UNBRIDGE for c in _conjuncts(expr))


# ── Selection ────────────────────────────────────────────────────────

class _Selector:
    def __init__(self, catalog: Catalog) -> None:
        self.catalog = catalog
        self.partitions = catalog.partition_count
        self._ids = itertools.count(1)

    def exchange(self, kind: ExchangeKind, below: PhysicalOperator, degree: int,
                 keys: tuple[Expr, ...] = ()) -> PhysicalOperator:
        return PhysicalOperator(
            PhysKind.EXCHANGE, (below,), degree=degree, exchange=kind, keys=keys, op_id=next(self._ids),
        )

    def branch_bytes(self, op: LogicalOperator) -> int:
        return sum(
            self.catalog.collection_bytes(datascan_collection(o))
            for o in walk(op) if o.kind is OpKind.DATASCAN
        )

    def convert(self, op: LogicalOperator, local: bool) -> PhysicalOperator:
        kind = op.kind
        if kind is OpKind.EMPTY_TUPLE_SOURCE:
            return PhysicalOperator(PhysKind.EMPTY_SOURCE)
        if kind is OpKind.NESTED_TUPLE_SOURCE:
            return PhysicalOperator(PhysKind.NESTED_SOURCE)
        if kind is OpKind.SUBPLAN and not local and op.input.kind is OpKind.EMPTY_TUPLE_SOURCE:
            # the nested plan runs exactly once; run it as part of the outer dataflow
            return self.convert(graft_source(op.nested[0], op.input), local)
        if kind is OpKind.JOIN:
            return self.join(op, local)

        below = self.convert(op.input, local)
        degree = below.degree
        if kind is OpKind.DATASCAN:
            name = datascan_collection(op)
            if below.kind is PhysKind.EMPTY_SOURCE and not local:
                return PhysicalOperator(
                    PhysKind.PARTITIONED_SCAN, variables=op.variables, degree=self.partitions,
                    collection=name, path=op.path,
                )
            return PhysicalOperator(
                PhysKind.COLLECTION_SCAN, (below,), op.variables, degree=degree, collection=name, path=op.path,
            )
        if kind is OpKind.ASSIGN:
            return PhysicalOperator(PhysKind.SCALAR_ASSIGN, (below,), op.variables, op.expressions, degree=degree)
        if kind is OpKind.UNNEST:
            return PhysicalOperator(PhysKind.UNNEST, (below,), op.variables, op.expressions, degree=degree)
        if kind is OpKind.SELECT:
            return PhysicalOperator(PhysKind.SELECT, (below,), expressions=op.expressions, degree=degree)
        if kind is OpKind.SUBPLAN:
            nested = tuple(self.convert(n, local=True) for n in op.nested)
            return PhysicalOperator(PhysKind.SUBPLAN, (below,), nested=nested, degree=degree)
        if kind is OpKind.AGGREGATE:
            return self.aggregate(op, below, local)
        if kind is OpKind.DISTRIBUTE_RESULT:
            merged = self.exchange(ExchangeKind.MERGE_TO_ONE, below, 1)
            return PhysicalOperator(PhysKind.RESULT_SINK, (merged,), expressions=op.expressions)
        raise PhysicalPlanError(f"no physical operator for {kind.value}")

    def aggregate(self, op: LogicalOperator, below: PhysicalOperator, local: bool) -> PhysicalOperator:
        if local or below.degree == 1 and not op.two_step:
            return PhysicalOperator(
                PhysKind.STREAMING_AGGREGATE, (below,), op.variables, op.expressions, phase=AggPhase.SINGLE,
            )
        if not op.two_step:
            merged = self.exchange(ExchangeKind.MERGE_TO_ONE, below, 1)
            return PhysicalOperator(
                PhysKind.STREAMING_AGGREGATE, (merged,), op.variables, op.expressions, phase=AggPhase.SINGLE,
            )
        local_exprs = tuple(
            Call(pair[0], e.args) for pair, e in zip(op.two_step, op.expressions)
        )
        global_exprs = tuple(Call(pair[1], (Var(v),)) for pair, v in zip(op.two_step, op.variables))
        partial = PhysicalOperator(
            PhysKind.STREAMING_AGGREGATE, (below,), op.variables, local_exprs,
            degree=below.degree, phase=AggPhase.LOCAL,
        )
        merged = self.exchange(ExchangeKind.MERGE_TO_ONE, partial, 1)
        return PhysicalOperator(
            PhysKind.STREAMING_AGGREGATE, (merged,), op.variables, global_exprs, phase=AggPhase.GLOBAL,
        )

    def join(self, op: LogicalOperator, local: bool) -> PhysicalOperator:
        left, right = (self.convert(i, local) for i in op.inputs)
        cond = op.expressions[0]
        keys = equi_keys(cond, live_variables(op.inputs[0]), live_variables(op.inputs[1]))
        if _is_bridged(cond):
            cond = unbridge(cond)
        sizes = [self.branch_bytes(i) for i in op.inputs]
        smaller = 0 if sizes[0] < sizes[1] else 1
        if local:
            return PhysicalOperator(
                PhysKind.NESTED_LOOP_JOIN, (left, right), expressions=(cond,), build=smaller,
            )
        if keys:
            p = self.partitions
            routed = []
            for side, below in enumerate((left, right)):
                side_keys = tuple(pair[side] for pair in keys)
                if p == 1 and below.degree == 1:
                    routed.append(self.exchange(ExchangeKind.ONE_TO_ONE, below, 1))
                else:
                    routed.append(self.exchange(ExchangeKind.HASH_PARTITION, below, p, side_keys))
            log.debug("hash join on %d key(s), build side %d", len(keys), smaller)
            return PhysicalOperator(
                PhysKind.HYBRID_HASH_JOIN, tuple(routed), expressions=(cond,), degree=p,
                join_keys=keys, build=smaller,
            )
        inputs = [left, right]
        larger = 1 - smaller
        degree = inputs[larger].degree
        inputs[smaller] = self.exchange(ExchangeKind.BROADCAST, inputs[smaller], degree)
        return PhysicalOperator(
            PhysKind.NESTED_LOOP_JOIN, tuple(inputs), expressions=(cond,), degree=degree, build=smaller,
        )


def select_physical(plan: LogicalPlan, catalog: Catalog, config: RunConfig | None = None) -> PhysicalPlan:
    """
    Physical operators for an optimized plan; PhysicalPlanError on an
    unmapped operator.  The catalog carries the partition layout; a
    ``config`` whose partition count disagrees with it is a ConfigError.
    """
    if config is not None and config.partitions != catalog.partition_count:
        raise ConfigError(
            f"catalog is cut into {catalog.partition_count} partition(s), config asks for {config.partitions}"
        )
    selector = _Selector(catalog)
    root = selector.convert(plan.root, local=False)
    if root.kind is not PhysKind.RESULT_SINK:
        raise PhysicalPlanError(f"plan root must be DISTRIBUTE-RESULT, got {plan.root.kind.value}")
    physical = PhysicalPlan(root, selector.partitions)
    log.info("physical plan: %d operators, %d exchanges, %d partitions",
             len(physical.operators()), physical.count(PhysKind.EXCHANGE), physical.partitions)
    return physical


# ── Printing ─────────────────────────────────────────────────────────

def _describe(op: PhysicalOperator) -> str:
    kind = op.kind
    bindings = ", ".join(f"$${v}:{format_expr(e)}" for v, e in zip(op.variables, op.expressions))
    if kind in (PhysKind.PARTITIONED_SCAN, PhysKind.COLLECTION_SCAN):
        args = [f'"{op.collection}"', f"$${op.variables[0]}"]
        if op.path:
            args.append('"/' + "/".join(op.path) + '"')
        text = f"{kind.value}( {', '.join(args)} )"
    elif kind is PhysKind.EXCHANGE:
        text = f"EXCHANGE {op.exchange.value} #{op.op_id} {op.input.degree}→{op.degree}"
        if op.keys:
            text += f" on ({', '.join(format_expr(k) for k in op.keys)})"
        return text
    elif kind is PhysKind.STREAMING_AGGREGATE:
        text = f"{kind.value}[{op.phase.value}]( {bindings} )"
    elif kind is PhysKind.HYBRID_HASH_JOIN:
        keys = ", ".join(f"{format_expr(a)}={format_expr(b)}" for a, b in op.join_keys)
        text = f"{kind.value}( {keys}; build={op.build}; {format_expr(op.expressions[0])} )"
    elif kind is PhysKind.NESTED_LOOP_JOIN:
        text = f"{kind.value}( {format_expr(op.expressions[0])}; inner={op.build} )"
    elif op.variables:
        text = f"{kind.value}( {bindings} )"
    elif op.expressions:
        text = f"{kind.value}( {', '.join(format_expr(e) for e in op.expressions)} )"
    else:
        text = kind.value
    return text + f" [{op.degree}]"


def _lines(op: PhysicalOperator, indent: str, out: list[str]) -> None:
    out.append(indent + _describe(op))
    for n in op.nested:
        out.append(indent + "  {")
        _lines(n, indent + "    ", out)
        out.append(indent + "  }")
    for i in op.inputs:
        _lines(i, indent + "  ", out)


def print_physical(plan: PhysicalPlan | PhysicalOperator) -> str:
    root = plan.root if isinstance(plan, PhysicalPlan) else plan
    out: list[str] = []
    _lines(root, "", out)
    return "\n".join(out) + "\n"
