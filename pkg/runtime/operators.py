"""
Push-based operators — each consumes frames from its producer and pushes
its own output frames to the next operator through a FrameAppender.
``build_pipeline`` wires a fragment of the physical plan into a chain of
operators and returns the drivers that start its sources, in the order
they must run.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable

import xdm
from compiler.algebra import Call, Expr
from compiler.physical import PhysKind, PhysicalOperator
from errors import PhysicalPlanError
from runtime.aggregates import aggregator
from runtime.frames import Frame, FrameAppender, Row, RuntimeStats
from runtime.functions import EvalContext, collection_documents, evaluate, unnest_items
from runtime.hashjoin import HybridHashJoin, canonical_key, merge_rows
from xdm import EMPTY
from xml_ingest import scan_collection_with_path

Driver = Callable[[], None]


@dataclass
class TaskContext:
    """Everything one partition of one fragment needs."""

    eval: EvalContext
    partition: int
    frame_size: int
    memory_budget: int
    scratch_dir: str
    stats: RuntimeStats = field(default_factory=RuntimeStats)
    inlets: dict[int, Any] = field(default_factory=dict)


class Consumer(ABC):
    @abstractmethod
    def push(self, frame: Frame) -> None:
        ...

    @abstractmethod
    def close(self) -> None:
        ...


class CollectSink(Consumer):
    def __init__(self) -> None:
        self.rows: list[Row] = []
        self.closed = False

    def push(self, frame: Frame) -> None:
        self.rows.extend(frame)

    def close(self) -> None:
        self.closed = True


class Operator(Consumer):
    def __init__(self, op: PhysicalOperator, ctx: TaskContext, downstream: Consumer) -> None:
        self.op = op
        self.ctx = ctx
        self.downstream = downstream
        self.out = FrameAppender(ctx.frame_size, downstream.push, ctx.stats)

    def push(self, frame: Frame) -> None:
        for row in frame:
            self.process(row)

    @abstractmethod
    def process(self, row: Row) -> None:
        ...

    def close(self) -> None:
        self.out.flush()
        self.downstream.close()


class AssignOp(Operator):
    def process(self, row):
        new = dict(row)
        for var, expr in zip(self.op.variables, self.op.expressions):
            new[var] = evaluate(expr, new, self.ctx.eval)
        self.out.append(new)


class SelectOp(Operator):
    def process(self, row):
        if xdm.effective_boolean_value(evaluate(self.op.expressions[0], row, self.ctx.eval)):
            self.out.append(row)


class UnnestOp(Operator):
    def process(self, row):
        var = self.op.variables[0]
        for item in unnest_items(self.op.expressions[0], row, self.ctx.eval):
            self.out.append({**row, var: (item,)})


class CollectionScanOp(Operator):
    """DATASCAN fed by a dataflow: every partition of the collection, per input tuple."""

    def process(self, row):
        var = self.op.variables[0]
        for node in collection_documents(self.ctx.eval, self.op.collection, self.op.path):
            self.out.append({**row, var: (node,)})


class SubplanOp(Operator):
    def process(self, row):
        for nested in self.op.nested:
            sink = CollectSink()
            drivers = build_pipeline(nested, sink, self.ctx, outer=row)
            for drive in drivers:
                drive()
            for produced in sink.rows:
                self.out.append({**row, **produced})


class StreamingAggregateOp(Operator):
    """Folds every input tuple; emits one tuple when its input closes."""

    def __init__(self, op, ctx, downstream):
        super().__init__(op, ctx, downstream)
        self.fns = []
        self.args: list[Expr | None] = []
        for expr in op.expressions:
            if not isinstance(expr, Call):
                raise PhysicalPlanError(f"aggregate expression {expr} is not a call")
            self.fns.append(aggregator(expr.name))
            self.args.append(expr.args[0] if expr.args else None)
        self.accs = [fn.create_accumulator() for fn in self.fns]

    def process(self, row):
        for i, (fn, arg) in enumerate(zip(self.fns, self.args)):
            seq = EMPTY if arg is None else evaluate(arg, row, self.ctx.eval)
            self.accs[i] = fn.add_input(self.accs[i], seq)

    def close(self):
        out = {var: fn.extract_output(acc) for var, fn, acc in zip(self.op.variables, self.fns, self.accs)}
        self.out.append(out)
        super().close()


def _key_fn(keys: tuple[Expr, ...], ctx: EvalContext) -> Callable[[Row], tuple | None]:
    def key(row: Row) -> tuple | None:
        parts = []
        for k in keys:
            part = canonical_key(evaluate(k, row, ctx))
            if part is None:
                return None
            parts.append(part)
        return tuple(parts)
    return key


class _BuildPort(Consumer):
    def __init__(self, owner: "JoinOp") -> None:
        self.owner = owner

    def push(self, frame):
        for row in frame:
            self.owner.add_build(row)

    def close(self):
        self.owner.finish_build()


class JoinOp(Operator):
    """Input ``op.build`` arrives first on ``build_port``; the other input is pushed to the operator itself."""

    def __init__(self, op, ctx, downstream):
        super().__init__(op, ctx, downstream)
        self.build_port = _BuildPort(self)
        cond = op.expressions[0]
        self.condition = lambda row: xdm.effective_boolean_value(evaluate(cond, row, ctx.eval))

    @abstractmethod
    def add_build(self, row: Row) -> None:
        ...

    def finish_build(self) -> None:
        pass


class HashJoinOp(JoinOp):
    def __init__(self, op, ctx, downstream):
        super().__init__(op, ctx, downstream)
        build, stream = op.build, 1 - op.build
        self.join = HybridHashJoin(
            _key_fn(tuple(pair[build] for pair in op.join_keys), ctx.eval),
            _key_fn(tuple(pair[stream] for pair in op.join_keys), ctx.eval),
            self.condition,
            ctx.memory_budget,
            ctx.scratch_dir,
            ctx.stats,
        )

    def add_build(self, row):
        self.join.add_build(row)

    def finish_build(self):
        self.join.finish_build()

    def process(self, row):
        for merged in self.join.lookup(row):
            self.out.append(merged)

    def close(self):
        for merged in self.join.finish():
            self.out.append(merged)
        super().close()


class NestedLoopJoinOp(JoinOp):
    def __init__(self, op, ctx, downstream):
        super().__init__(op, ctx, downstream)
        self.inner: list[Row] = []

    def add_build(self, row):
        self.inner.append(row)

    def process(self, row):
        for other in self.inner:
            merged = merge_rows(other, row)
            if self.condition(merged):
                self.out.append(merged)


# ── Sources ──────────────────────────────────────────────────────────

def _rows_driver(rows: list[Row], downstream: Consumer, ctx: TaskContext) -> Driver:
    def drive() -> None:
        out = FrameAppender(ctx.frame_size, downstream.push, ctx.stats)
        for row in rows:
            out.append(row)
        out.flush()
        downstream.close()
    return drive


def _inlet_driver(inlet, downstream: Consumer) -> Driver:
    """Hands frames from an exchange queue downstream until every producer has ended."""
    def drive() -> None:
        ended = 0
        while ended < inlet.producers:
            frame = inlet.channel.get()
            if frame is None:
                ended += 1
            else:
                downstream.push(frame)
        downstream.close()
    return drive


def _scan_driver(op: PhysicalOperator, downstream: Consumer, ctx: TaskContext) -> Driver:
    def drive() -> None:
        spec = ctx.eval.catalog.partition_spec(op.collection)
        var = op.variables[0]
        out = FrameAppender(ctx.frame_size, downstream.push, ctx.stats)
        for node in scan_collection_with_path(spec, ctx.partition, op.path, ctx.eval.scan_stats):
            out.append({var: (node,)})
        out.flush()
        downstream.close()
    return drive


_UNARY = {
    PhysKind.SCALAR_ASSIGN: AssignOp,
    PhysKind.SELECT: SelectOp,
    PhysKind.UNNEST: UnnestOp,
    PhysKind.COLLECTION_SCAN: CollectionScanOp,
    PhysKind.SUBPLAN: SubplanOp,
    PhysKind.STREAMING_AGGREGATE: StreamingAggregateOp,
}


def build_pipeline(
    op: PhysicalOperator,
    downstream: Consumer,
    ctx: TaskContext,
    outer: Row | None = None,
) -> list[Driver]:
    """
    Operators for the fragment rooted at ``op`` pushing into
    ``downstream``.  Exchanges are fragment leaves that drain the queue
    in ``ctx.inlets``; ``outer`` is the tuple a nested plan runs for.
    """
    kind = op.kind
    if kind is PhysKind.EMPTY_SOURCE:
        return [_rows_driver([{}], downstream, ctx)]
    if kind is PhysKind.NESTED_SOURCE:
        if outer is None:
            raise PhysicalPlanError("nested source outside a nested plan")
        return [_rows_driver([outer], downstream, ctx)]
    if kind is PhysKind.PARTITIONED_SCAN:
        return [_scan_driver(op, downstream, ctx)]
    if kind is PhysKind.EXCHANGE:
        return [_inlet_driver(ctx.inlets[op.op_id], downstream)]
    if kind is PhysKind.RESULT_SINK:
        return build_pipeline(op.input, downstream, ctx, outer)
    if kind in _UNARY:
        node = _UNARY[kind](op, ctx, downstream)
        return build_pipeline(op.input, node, ctx, outer)
    if kind in (PhysKind.HYBRID_HASH_JOIN, PhysKind.NESTED_LOOP_JOIN):
        cls = HashJoinOp if kind is PhysKind.HYBRID_HASH_JOIN else NestedLoopJoinOp
        join = cls(op, ctx, downstream)
        build_side = build_pipeline(op.inputs[op.build], join.build_port, ctx, outer)
        stream_side = build_pipeline(op.inputs[1 - op.build], join, ctx, outer)
        return build_side + stream_side
    raise PhysicalPlanError(f"no runtime operator for {kind.value}")
