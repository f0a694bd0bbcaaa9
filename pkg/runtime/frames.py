"""
Frames — fixed-capacity batches of tuples moved between operators, plus
the instrumentation counters the tests read.

A tuple is a dict from ``$$`` variable id to an XDM sequence.  Its size is
the serialized size of its items; nodes carry theirs precomputed.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

from errors import FrameOverflow
from xdm import Node, XDMSequence

Row = dict[int, XDMSequence]
Frame = list[Row]

FIELD_OVERHEAD = 8
ATOMIC_OVERHEAD = 8


def item_size(item) -> int:
    if isinstance(item, Node):
        return max(item.nbytes, 1)
    value = item.value
    if isinstance(value, str):
        return ATOMIC_OVERHEAD + len(value)
    return ATOMIC_OVERHEAD + 8


def tuple_size(row: Row) -> int:
    return sum(FIELD_OVERHEAD + sum(item_size(i) for i in seq) for seq in row.values())


def frame_bytes(frame: Frame) -> int:
    return sum(tuple_size(r) for r in frame)


@dataclass
class RuntimeStats:
    """Counters collected per partition and merged at the coordinator."""

    tuples_out: int = 0
    frames_out: int = 0
    max_buffered_tuples: int = 0
    max_buffered_bytes: int = 0
    max_tuple_bytes: int = 0
    max_queued_frames: int = 0
    exchange_bytes: Counter = field(default_factory=Counter)
    exchange_tuples: Counter = field(default_factory=Counter)
    spill_files: int = 0
    spilled_bytes: int = 0
    partitions_run: int = 0

    def merge(self, other: "RuntimeStats") -> "RuntimeStats":
        self.tuples_out += other.tuples_out
        self.frames_out += other.frames_out
        self.max_buffered_tuples = max(self.max_buffered_tuples, other.max_buffered_tuples)
        self.max_buffered_bytes = max(self.max_buffered_bytes, other.max_buffered_bytes)
        self.max_tuple_bytes = max(self.max_tuple_bytes, other.max_tuple_bytes)
        self.max_queued_frames = max(self.max_queued_frames, other.max_queued_frames)
        self.exchange_bytes.update(other.exchange_bytes)
        self.exchange_tuples.update(other.exchange_tuples)
        self.spill_files += other.spill_files
        self.spilled_bytes += other.spilled_bytes
        self.partitions_run += other.partitions_run
        return self


class FrameAppender:
    """
    Packs tuples into frames of at most ``capacity`` bytes and hands each
    full frame to ``emit``.  A tuple that cannot fit into an empty frame
    raises FrameOverflow.
    """

    def __init__(self, capacity: int, emit: Callable[[Frame], None], stats: RuntimeStats | None = None) -> None:
        self.capacity = capacity
        self.emit = emit
        self.stats = stats
        self.frame: Frame = []
        self.nbytes = 0

    def append(self, row: Row) -> None:
        size = tuple_size(row)
        if size > self.capacity:
            raise FrameOverflow(size, self.capacity)
        if self.frame and self.nbytes + size > self.capacity:
            self.flush()
        self.frame.append(row)
        self.nbytes += size
        stats = self.stats
        if stats is not None:
            stats.tuples_out += 1
            stats.max_tuple_bytes = max(stats.max_tuple_bytes, size)
            stats.max_buffered_tuples = max(stats.max_buffered_tuples, len(self.frame))
            stats.max_buffered_bytes = max(stats.max_buffered_bytes, self.nbytes)

    def flush(self) -> None:
        if not self.frame:
            return
        frame, self.frame, self.nbytes = self.frame, [], 0
        if self.stats is not None:
            self.stats.frames_out += 1
        self.emit(frame)
