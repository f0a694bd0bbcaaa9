"""
Exchanges — bounded frame queues between the partitions of adjacent
fragments.

Every consumer partition of an exchange owns one queue.  Producer tasks
route their output rows into per-destination frames and put each full
frame on the destination queue, blocking while it holds ``capacity``
frames; the consumer drains its queue until every producer has sent its
end marker.  Queues are ``queue.Queue`` for thread workers and
``multiprocessing.Manager`` proxies for process workers.
"""

from __future__ import annotations

import logging
import queue
import threading
from dataclasses import dataclass
from typing import Any

from compiler.algebra import Expr
from compiler.physical import ExchangeKind, PhysicalOperator
from runtime.frames import Frame, FrameAppender, Row, RuntimeStats, tuple_size
from runtime.functions import EvalContext, evaluate
from runtime.hashjoin import canonical_key, stable_hash
from runtime.operators import Consumer

log = logging.getLogger(__name__)

POLL_SECONDS = 0.05
END = None


class ExchangeCancelled(Exception):
    """Raised in a task blocked on a queue after another task failed."""


@dataclass(frozen=True)
class Channel:
    """One consumer partition's queue plus the run-wide abort flag."""

    queue: Any
    abort: Any

    def put(self, frame: Frame | None, stats: RuntimeStats | None = None) -> None:
        while True:
            try:
                self.queue.put(frame, timeout=POLL_SECONDS)
                break
            except queue.Full:
                if self.abort.is_set():
                    raise ExchangeCancelled("run aborted while sending") from None
        if stats is not None and frame is not END:
            stats.max_queued_frames = max(stats.max_queued_frames, self.queue.qsize())

    def get(self) -> Frame | None:
        while True:
            try:
                return self.queue.get(timeout=POLL_SECONDS)
            except queue.Empty:
                if self.abort.is_set():
                    raise ExchangeCancelled("run aborted while receiving") from None


@dataclass(frozen=True)
class Outlet:
    """Producer side of one exchange: one channel per consumer partition."""

    op_id: int
    kind: ExchangeKind
    keys: tuple[Expr, ...]
    channels: tuple[Channel, ...]


@dataclass(frozen=True)
class Inlet:
    """Consumer side: a channel fed by ``producers`` partitions."""

    op_id: int
    channel: Channel
    producers: int


class ExchangeWiring:
    """Queues for every exchange of one run."""

    def __init__(self, factory: "QueueFactory") -> None:
        self.factory = factory
        self.channels: dict[int, tuple[Channel, ...]] = {}

    def connect(self, exchange: PhysicalOperator) -> None:
        self.channels[exchange.op_id] = tuple(
            Channel(self.factory.queue(), self.factory.abort) for _ in range(exchange.degree)
        )

    def outlet(self, exchange: PhysicalOperator) -> Outlet:
        return Outlet(exchange.op_id, exchange.exchange, exchange.keys, self.channels[exchange.op_id])

    def inlet(self, exchange: PhysicalOperator, partition: int) -> Inlet:
        return Inlet(exchange.op_id, self.channels[exchange.op_id][partition], exchange.input.degree)


class QueueFactory:
    """
    Queue and abort-flag source.  ``capacity`` 0 gives unbounded queues,
    which inline runs need because they execute one task at a time.
    """

    def __init__(self, capacity: int, manager=None) -> None:
        self.capacity = capacity
        self.manager = manager
        self.abort = manager.Event() if manager is not None else threading.Event()

    def queue(self):
        if self.manager is not None:
            return self.manager.Queue(self.capacity)
        return queue.Queue(self.capacity)


class ExchangeSender(Consumer):
    """Fragment-root consumer that routes rows into the outlet's channels."""

    def __init__(self, outlet: Outlet, partition: int, frame_size: int,
                 ctx: EvalContext, stats: RuntimeStats) -> None:
        self.outlet = outlet
        self.partition = partition
        self.ctx = ctx
        self.stats = stats
        self.appenders = [
            FrameAppender(frame_size, lambda frame, ch=ch: ch.put(frame, stats))
            for ch in outlet.channels
        ]

    def _targets(self, row: Row) -> range | tuple[int, ...]:
        kind = self.outlet.kind
        degree = len(self.outlet.channels)
        if kind is ExchangeKind.MERGE_TO_ONE:
            return (0,)
        if kind is ExchangeKind.BROADCAST:
            return range(degree)
        if kind is ExchangeKind.ONE_TO_ONE:
            return (self.partition % degree,)
        parts = tuple(canonical_key(evaluate(k, row, self.ctx)) for k in self.outlet.keys)
        return (0 if None in parts else stable_hash(parts) % degree,)

    def push(self, frame: Frame) -> None:
        op_id = self.outlet.op_id
        for row in frame:
            size = tuple_size(row)
            for target in self._targets(row):
                self.appenders[target].append(row)
                self.stats.exchange_tuples[op_id] += 1
                self.stats.exchange_bytes[op_id] += size

    def close(self) -> None:
        for appender, channel in zip(self.appenders, self.outlet.channels):
            appender.flush()
            channel.put(END)
        log.debug("exchange #%d partition %d done: %d tuples sent",
                  self.outlet.op_id, self.partition, self.stats.exchange_tuples[self.outlet.op_id])
