"""
Aggregate accumulators — create / add / merge / extract, one class per
aggregate function, shared by single-step, local and global evaluation.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from typing import Any, Iterable

import xdm
from errors import XQueryTypeError
from runtime.functions import SCALAR_FUNCTIONS, arithmetic, compare_atomic
from xdm import EMPTY, NUMERIC_KINDS, STRING_KINDS, AtomicType, AtomicValue, XDMSequence


def _numeric_item(item, what: str) -> AtomicValue:
    value = xdm.atomize_item(item)
    if value.kind is AtomicType.UNTYPED:
        return xdm.cast(value, AtomicType.DOUBLE)
    if value.kind not in NUMERIC_KINDS:
        raise XQueryTypeError(f"{what}() over {value.kind.value} values", "FORG0006")
    return value


def _add(total: AtomicValue | None, value: AtomicValue) -> AtomicValue:
    return value if total is None else arithmetic("add", total, value)


class AggregateFn(ABC):
    name = ""

    @abstractmethod
    def create_accumulator(self) -> Any:
        ...

    @abstractmethod
    def add_input(self, acc: Any, seq: XDMSequence) -> Any:
        ...

    @abstractmethod
    def merge_accumulators(self, accs: Iterable[Any]) -> Any:
        ...

    @abstractmethod
    def extract_output(self, acc: Any) -> XDMSequence:
        ...


class CountFn(AggregateFn):
    name = "count"

    def create_accumulator(self):
        return 0

    def add_input(self, acc, seq):
        return acc + len(seq)

    def merge_accumulators(self, accs):
        return sum(accs)

    def extract_output(self, acc):
        return (xdm.integer(acc),)


class SumFn(AggregateFn):
    name = "sum"

    def create_accumulator(self):
        return None

    def add_input(self, acc, seq):
        for item in seq:
            acc = _add(acc, _numeric_item(item, self.name))
        return acc

    def merge_accumulators(self, accs):
        total = None
        for acc in accs:
            if acc is not None:
                total = _add(total, acc)
        return total

    def extract_output(self, acc):
        return (xdm.integer(0) if acc is None else acc,)


class _ExtremumFn(AggregateFn):
    """min/max: untyped values compare as doubles, NaN wins."""

    op = "lt"

    def create_accumulator(self):
        return None

    def _convert(self, item) -> AtomicValue:
        value = xdm.atomize_item(item)
        if value.kind is AtomicType.UNTYPED:
            return xdm.cast(value, AtomicType.DOUBLE)
        return value

    def _pick(self, best: AtomicValue | None, value: AtomicValue) -> AtomicValue:
        if best is None:
            return value
        if best.kind in NUMERIC_KINDS and isinstance(best.value, float) and math.isnan(best.value):
            return best
        if value.kind in NUMERIC_KINDS and isinstance(value.value, float) and math.isnan(value.value):
            return value
        numeric = best.kind in NUMERIC_KINDS, value.kind in NUMERIC_KINDS
        if numeric[0] != numeric[1] and not (best.kind in STRING_KINDS and value.kind in STRING_KINDS):
            raise XQueryTypeError(f"{self.name}() over {best.kind.value} and {value.kind.value}", "FORG0006")
        return value if compare_atomic(self.op, value, best) else best

    def add_input(self, acc, seq):
        for item in seq:
            acc = self._pick(acc, self._convert(item))
        return acc

    def merge_accumulators(self, accs):
        best = None
        for acc in accs:
            if acc is not None:
                best = self._pick(best, acc)
        return best

    def extract_output(self, acc):
        return EMPTY if acc is None else (acc,)


class MinFn(_ExtremumFn):
    name = "min"
    op = "lt"


class MaxFn(_ExtremumFn):
    name = "max"
    op = "gt"


def _mean(total: AtomicValue | None, count: int) -> XDMSequence:
    if count == 0:
        return EMPTY
    return (arithmetic("divide", total, xdm.integer(count)),)


class AvgFn(AggregateFn):
    name = "avg"

    def create_accumulator(self):
        return (None, 0)

    def add_input(self, acc, seq):
        total, count = acc
        for item in seq:
            total = _add(total, _numeric_item(item, self.name))
            count += 1
        return total, count

    def merge_accumulators(self, accs):
        total, count = None, 0
        for t, c in accs:
            if t is not None:
                total = _add(total, t)
            count += c
        return total, count

    def extract_output(self, acc):
        return _mean(*acc)


class AvgLocalFn(AvgFn):
    """Partial average: the (sum, count) pair as a two-item sequence."""

    name = "avg-local"

    def extract_output(self, acc):
        total, count = acc
        return (xdm.integer(0) if total is None else total, xdm.integer(count))


class AvgGlobalFn(AvgFn):
    name = "avg-global"

    def add_input(self, acc, seq):
        if not seq:
            return acc
        partial_sum, partial_count = seq
        if partial_count.value == 0:
            return acc
        return self.merge_accumulators([acc, (partial_sum, partial_count.value)])


class CreateSequenceFn(AggregateFn):
    name = "create_sequence"

    def create_accumulator(self):
        return []

    def add_input(self, acc, seq):
        acc.extend(seq)
        return acc

    def merge_accumulators(self, accs):
        out = []
        for acc in accs:
            out.extend(acc)
        return out

    def extract_output(self, acc):
        return tuple(acc)


class NonEmptyStreamFn(AggregateFn):
    name = "non-empty-stream"

    def create_accumulator(self):
        return False

    def add_input(self, acc, seq):
        return True

    def merge_accumulators(self, accs):
        return any(accs)

    def extract_output(self, acc):
        return (xdm.boolean(acc),)


class EmptyStreamFn(NonEmptyStreamFn):
    name = "empty-stream"

    def extract_output(self, acc):
        return (xdm.boolean(not acc),)


AGGREGATORS: dict[str, AggregateFn] = {
    fn.name: fn for fn in (
        CountFn(), SumFn(), MinFn(), MaxFn(), AvgFn(), AvgLocalFn(), AvgGlobalFn(),
        CreateSequenceFn(), NonEmptyStreamFn(), EmptyStreamFn(),
    )
}


def aggregator(name: str) -> AggregateFn:
    try:
        return AGGREGATORS[name]
    except KeyError:
        raise XQueryTypeError(f"{name} is not an aggregate function", "XPST0017") from None


def aggregate_sequence(name: str, seq: XDMSequence) -> XDMSequence:
    """Scalar form: the aggregate over one materialized sequence."""
    fn = aggregator(name)
    return fn.extract_output(fn.add_input(fn.create_accumulator(), seq))


def two_step_aggregate(partials: Iterable[XDMSequence], global_name: str) -> XDMSequence:
    """Combine per-partition local results with the global function."""
    fn = aggregator(global_name)
    acc = fn.create_accumulator()
    for partial in partials:
        acc = fn.add_input(acc, partial)
    return fn.extract_output(acc)


SCALAR_FUNCTIONS.update({
    name: (lambda n: lambda ctx, seq: aggregate_sequence(n, seq))(name)
    for name in ("count", "sum", "min", "max", "avg")
})
