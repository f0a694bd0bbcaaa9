"""
Join algorithms — hybrid hash join with pickle spill files, nested-loop
join, and the stable key hashing shared with hash-partition exchanges.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import pickle
import tempfile
from collections import defaultdict
from typing import Callable, Iterable, Iterator

import xdm
from errors import SpillIoError, XQueryTypeError
from runtime.frames import Row, RuntimeStats, tuple_size
from xdm import NUMERIC_KINDS, STRING_KINDS, XDMSequence

log = logging.getLogger(__name__)

FANOUT = 8
MAX_LEVEL = 6

JoinKey = tuple


# ── Keys and hashing ─────────────────────────────────────────────────

def canonical_key(seq: XDMSequence) -> tuple | None:
    """
    Hashable form of an atomized singleton under value-eq.  None for the
    empty sequence and NaN, which never compare equal.
    """
    if not seq:
        return None
    if len(seq) > 1:
        raise XQueryTypeError(f"join key is a sequence of {len(seq)} items")
    value = xdm.atomize_item(seq[0])
    kind = value.kind
    if kind in STRING_KINDS:
        return ("str", value.value)
    if kind in NUMERIC_KINDS:
        # -0.0 equals 0.0 and must land in the same bucket
        number = float(value.value) + 0.0
        return None if math.isnan(number) else ("num", number)
    return (kind.value, xdm.lexical(value))


def _key_bytes(key) -> bytes:
    if isinstance(key, tuple):
        return b"(" + b",".join(_key_bytes(part) for part in key) + b")"
    if isinstance(key, float):
        # integral values hash like ints so 2.0 and 2 agree
        key = 0.0 if key == 0 else key
        return repr(int(key) if key.is_integer() else key).encode("ascii")
    return repr(key).encode("utf-8")


def stable_hash(key: JoinKey, level: int = 0) -> int:
    """Salted BLAKE2 of the key's canonical bytes; equal keys hash alike at every level."""
    digest = hashlib.blake2b(_key_bytes(key), digest_size=8, salt=level.to_bytes(8, "big"))
    return int.from_bytes(digest.digest(), "big")


def merge_rows(a: Row, b: Row) -> Row:
    return {**a, **b}


# ── Spill files ──────────────────────────────────────────────────────

class _SpillFile:
    def __init__(self, scratch_dir: str, stats: RuntimeStats) -> None:
        try:
            fd, self.path = tempfile.mkstemp(prefix="xqflow-spill-", suffix=".pkl", dir=scratch_dir)
            self.stream = os.fdopen(fd, "wb")
        except OSError as exc:
            raise SpillIoError(f"cannot create spill file in {scratch_dir}: {exc}") from exc
        self.stats = stats
        self.rows = 0
        stats.spill_files += 1

    def write(self, row: Row) -> None:
        try:
            pickle.dump(row, self.stream, protocol=pickle.HIGHEST_PROTOCOL)
        except OSError as exc:
            raise SpillIoError(f"{self.path}: {exc}") from exc
        self.rows += 1
        self.stats.spilled_bytes += tuple_size(row)

    def close(self) -> None:
        try:
            self.stream.close()
        except OSError as exc:
            raise SpillIoError(f"{self.path}: {exc}") from exc

    def read(self) -> Iterator[Row]:
        try:
            with open(self.path, "rb") as f:
                while True:
                    try:
                        yield pickle.load(f)
                    except EOFError:
                        return
        except OSError as exc:
            raise SpillIoError(f"{self.path}: {exc}") from exc

    def remove(self) -> None:
        try:
            os.unlink(self.path)
        except OSError:
            log.warning("could not remove spill file %s", self.path)


# ── Hybrid hash join ─────────────────────────────────────────────────

class HybridHashJoin:
    """
    Build rows go into an in-memory table until it outgrows
    ``memory_budget``; from then on keys are split ``FANOUT`` ways, bucket
    0 stays resident and the other buckets are written to spill files.
    Streamed rows of spilled buckets are spilled too and each bucket pair is
    joined recursively with a fresh hash salt.
    """

    def __init__(
        self,
        build_key: Callable[[Row], JoinKey | None],
        stream_key: Callable[[Row], JoinKey | None],
        residual: Callable[[Row], bool],
        memory_budget: int,
        scratch_dir: str,
        stats: RuntimeStats,
        level: int = 0,
    ) -> None:
        self.build_key = build_key
        self.stream_key = stream_key
        self.residual = residual
        self.memory_budget = memory_budget
        self.scratch_dir = scratch_dir
        self.stats = stats
        self.level = level
        self.table: defaultdict[JoinKey, list[Row]] = defaultdict(list)
        self.resident_bytes = 0
        self.spilling = False
        self.build_spills: dict[int, _SpillFile] = {}
        self.stream_spills: dict[int, _SpillFile] = {}

    def _bucket(self, key: JoinKey) -> int:
        return stable_hash(key, self.level) % FANOUT

    def _spill(self, files: dict[int, _SpillFile], bucket: int, row: Row) -> None:
        if bucket not in files:
            files[bucket] = _SpillFile(self.scratch_dir, self.stats)
        files[bucket].write(row)

    def _start_spilling(self) -> None:
        self.spilling = True
        log.info("hash join level %d spilling: %d bytes resident, budget %d",
                 self.level, self.resident_bytes, self.memory_budget)
        kept: defaultdict[JoinKey, list[Row]] = defaultdict(list)
        self.resident_bytes = 0
        for key, rows in self.table.items():
            bucket = self._bucket(key)
            for row in rows:
                if bucket == 0:
                    kept[key].append(row)
                    self.resident_bytes += tuple_size(row)
                else:
                    self._spill(self.build_spills, bucket, row)
        self.table = kept

    def add_build(self, row: Row) -> None:
        key = self.build_key(row)
        if key is None:
            return
        if self.spilling and self._bucket(key) != 0:
            self._spill(self.build_spills, self._bucket(key), row)
            return
        self.table[key].append(row)
        self.resident_bytes += tuple_size(row)
        if not self.spilling and self.resident_bytes > self.memory_budget and self.level < MAX_LEVEL:
            self._start_spilling()

    def finish_build(self) -> None:
        for f in self.build_spills.values():
            f.close()

    def lookup(self, row: Row) -> Iterator[Row]:
        key = self.stream_key(row)
        if key is None:
            return
        if self.spilling and self._bucket(key) != 0:
            bucket = self._bucket(key)
            if bucket in self.build_spills:
                self._spill(self.stream_spills, bucket, row)
            return
        for match in self.table.get(key, ()):
            merged = merge_rows(match, row)
            if self.residual(merged):
                yield merged

    def finish(self) -> Iterator[Row]:
        """Join the spilled bucket pairs; removes the spill files."""
        for f in self.stream_spills.values():
            f.close()
        try:
            for bucket, build_file in sorted(self.build_spills.items()):
                stream_file = self.stream_spills.get(bucket)
                if stream_file is None:
                    continue
                inner = HybridHashJoin(
                    self.build_key, self.stream_key, self.residual, self.memory_budget,
                    self.scratch_dir, self.stats, self.level + 1,
                )
                for row in build_file.read():
                    inner.add_build(row)
                inner.finish_build()
                for row in stream_file.read():
                    yield from inner.lookup(row)
                yield from inner.finish()
        finally:
            for f in (*self.build_spills.values(), *self.stream_spills.values()):
                f.remove()
            self.build_spills.clear()
            self.stream_spills.clear()


def hybrid_hash_join(
    build: Iterable[Row],
    stream: Iterable[Row],
    build_key: Callable[[Row], JoinKey | None],
    stream_key: Callable[[Row], JoinKey | None],
    memory_budget: int,
    scratch_dir: str | None = None,
    residual: Callable[[Row], bool] = lambda row: True,
    stats: RuntimeStats | None = None,
) -> Iterator[Row]:
    """Whole-stream convenience wrapper around HybridHashJoin."""
    join = HybridHashJoin(
        build_key, stream_key, residual, memory_budget,
        scratch_dir or tempfile.gettempdir(), stats or RuntimeStats(),
    )
    for row in build:
        join.add_build(row)
    join.finish_build()
    for row in stream:
        yield from join.lookup(row)
    yield from join.finish()


def nested_loop_join(
    outer: Iterable[Row],
    inner: list[Row],
    condition: Callable[[Row], bool],
) -> Iterator[Row]:
    for row in outer:
        for other in inner:
            merged = merge_rows(other, row)
            if condition(merged):
                yield merged
