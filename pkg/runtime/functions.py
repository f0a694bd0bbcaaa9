"""
Runtime functions — scalar and unnesting evaluation of plan expressions
over a tuple.
"""

from __future__ import annotations

import math
import operator
from dataclasses import dataclass, field
from decimal import Decimal, DivisionByZero, InvalidOperation
from typing import Callable, Iterator

import xdm
from compiler.algebra import Call, Const, Expr, TypeRef, Var
from errors import XQueryTypeError
from runtime.frames import Row
from xdm import (
    DECIMAL_CONTEXT,
    EMPTY,
    INTEGER_KINDS,
    NUMERIC_KINDS,
    STRING_KINDS,
    AtomicType,
    AtomicValue,
    Item,
    Node,
    XDMSequence,
)
from xml_ingest import Catalog, ScanStats, parse_path


@dataclass
class EvalContext:
    catalog: Catalog
    scan_stats: ScanStats = field(default_factory=ScanStats)


# ── Atomic helpers ───────────────────────────────────────────────────

def single_atomic(seq: XDMSequence, what: str) -> AtomicValue | None:
    """Atomized singleton, None for the empty sequence."""
    if not seq:
        return None
    if len(seq) > 1:
        raise XQueryTypeError(f"{what} expects at most one item, got {len(seq)}")
    return xdm.atomize_item(seq[0])


def _numeric_operand(value: AtomicValue, what: str) -> AtomicValue:
    if value.kind is AtomicType.UNTYPED:
        return xdm.cast(value, AtomicType.DOUBLE)
    if value.kind not in NUMERIC_KINDS:
        raise XQueryTypeError(f"{what} is not defined for {value.kind.value}")
    return value


def _result_kind(a: AtomicType, b: AtomicType) -> AtomicType:
    kind = xdm.wider_numeric(a, b)
    return AtomicType.INTEGER if kind in INTEGER_KINDS else kind


_OPS = {"add": operator.add, "subtract": operator.sub, "multiply": operator.mul}


def arithmetic(op: str, a: AtomicValue, b: AtomicValue) -> AtomicValue:
    a, b = _numeric_operand(a, op), _numeric_operand(b, op)
    kind = _result_kind(a.kind, b.kind)
    if kind is AtomicType.INTEGER and op == "divide":
        kind = AtomicType.DECIMAL
    if kind in (AtomicType.DOUBLE, AtomicType.FLOAT):
        x, y = float(a.value), float(b.value)
        if op == "divide":
            if y == 0:
                result = math.nan if x == 0 or math.isnan(x) else math.copysign(math.inf, x) * math.copysign(1, y)
            else:
                result = x / y
        else:
            result = _OPS[op](x, y)
        return AtomicValue(kind, result)
    if kind is AtomicType.INTEGER:
        return xdm.integer(_OPS[op](int(a.value), int(b.value)))
    x, y = Decimal(a.value), Decimal(b.value)
    try:
        if op == "divide":
            if y == 0:
                raise XQueryTypeError("division by zero", "FOAR0001")
            result = DECIMAL_CONTEXT.divide(x, y)
        else:
            result = _OPS[op](x, y)
    except (DivisionByZero, InvalidOperation) as exc:
        raise XQueryTypeError(f"decimal {op} failed: {exc}", "FOAR0002") from exc
    return xdm.decimal(result)


def negate(value: AtomicValue) -> AtomicValue:
    value = _numeric_operand(value, "negate")
    if value.kind in INTEGER_KINDS:
        return xdm.integer(-value.value)
    return AtomicValue(value.kind, -value.value)


_COMPARE = {
    "eq": operator.eq, "ne": operator.ne, "lt": operator.lt,
    "le": operator.le, "gt": operator.gt, "ge": operator.ge,
}
_ORDERED_KINDS = frozenset({AtomicType.DATETIME, AtomicType.DATE, AtomicType.TIME})


def compare_atomic(op: str, a: AtomicValue, b: AtomicValue) -> bool:
    """Compare two atomics already converted to comparable kinds."""
    fn = _COMPARE[op]
    ka, kb = a.kind, b.kind
    if ka in NUMERIC_KINDS and kb in NUMERIC_KINDS:
        if isinstance(a.value, float) or isinstance(b.value, float):
            return fn(float(a.value), float(b.value))
        return fn(Decimal(a.value), Decimal(b.value))
    if ka in STRING_KINDS and kb in STRING_KINDS:
        return fn(a.value, b.value)
    if ka is kb and (ka is AtomicType.BOOLEAN or ka in _ORDERED_KINDS):
        return fn(a.value, b.value)
    if ka is kb and op in ("eq", "ne"):
        return fn(a.value, b.value)
    raise XQueryTypeError(f"cannot compare {ka.value} with {kb.value}")


def value_compare(op: str, left: XDMSequence, right: XDMSequence) -> XDMSequence:
    a = single_atomic(left, f"value-{op}")
    b = single_atomic(right, f"value-{op}")
    if a is None or b is None:
        return EMPTY
    if a.kind is AtomicType.UNTYPED:
        a = xdm.string(a.value)
    if b.kind is AtomicType.UNTYPED:
        b = xdm.string(b.value)
    return (xdm.boolean(compare_atomic(op, a, b)),)


def _general_pair(a: AtomicValue, b: AtomicValue) -> tuple[AtomicValue, AtomicValue]:
    ua, ub = a.kind is AtomicType.UNTYPED, b.kind is AtomicType.UNTYPED
    if ua and ub:
        return xdm.string(a.value), xdm.string(b.value)
    if ua:
        target = AtomicType.DOUBLE if b.kind in NUMERIC_KINDS else b.kind
        return xdm.cast(a, target), b
    if ub:
        target = AtomicType.DOUBLE if a.kind in NUMERIC_KINDS else a.kind
        return a, xdm.cast(b, target)
    return a, b


def general_compare(op: str, left: XDMSequence, right: XDMSequence) -> XDMSequence:
    lefts, rights = xdm.atomize(left), xdm.atomize(right)
    for a in lefts:
        for b in rights:
            x, y = _general_pair(a, b)
            if compare_atomic(op, x, y):
                return (xdm.boolean(True),)
    return (xdm.boolean(False),)


# ── Node helpers ─────────────────────────────────────────────────────

def _require_node(item: Item, step: str) -> Node:
    if not isinstance(item, Node):
        raise XQueryTypeError(f"{step} step applied to atomic value {item!r}", "XPTY0019")
    return item


def child_items(seq: XDMSequence, name: str) -> Iterator[Node]:
    for item in seq:
        yield from _require_node(item, "child").element_children(name)


def attribute_items(seq: XDMSequence, name: str) -> Iterator[Node]:
    for item in seq:
        attr = _require_node(item, "attribute").attribute(name)
        if attr is not None:
            yield attr


def _split_nodes(seq: XDMSequence) -> bool:
    """True for an all-node sequence, False for all-atomic; mixed raises."""
    nodes = sum(1 for i in seq if isinstance(i, Node))
    if nodes and nodes != len(seq):
        raise XQueryTypeError("path result mixes nodes and atomic values", "XPTY0018")
    return bool(nodes)


def sort_distinct(seq: XDMSequence) -> XDMSequence:
    if not _split_nodes(seq):
        return seq
    unique = {n.id: n for n in seq}
    return tuple(unique[k] for k in sorted(unique))


def sort_nodes(seq: XDMSequence) -> XDMSequence:
    if not _split_nodes(seq):
        return seq
    return tuple(sorted(seq, key=lambda n: n.id))


def distinct_nodes(seq: XDMSequence) -> XDMSequence:
    if not _split_nodes(seq):
        return seq
    seen: set = set()
    out = []
    for n in seq:
        if n.id not in seen:
            seen.add(n.id)
            out.append(n)
    return tuple(out)


# ── Function table ───────────────────────────────────────────────────

def _string_arg(seq: XDMSequence, what: str) -> str:
    value = single_atomic(seq, what)
    if value is None:
        raise XQueryTypeError(f"{what} requires a string argument")
    return value.value if value.kind in STRING_KINDS else xdm.lexical(value)


def _cast_fn(target: AtomicType) -> Callable:
    def run(ctx: EvalContext, seq: XDMSequence) -> XDMSequence:
        value = single_atomic(seq, target.value)
        return EMPTY if value is None else (xdm.cast(value, target),)
    return run


def _datetime_part(attr: str) -> Callable:
    def run(ctx: EvalContext, seq: XDMSequence) -> XDMSequence:
        value = single_atomic(seq, f"{attr}-from-dateTime")
        if value is None:
            return EMPTY
        value = xdm.promote(value, AtomicType.DATETIME)
        return (xdm.integer(getattr(value.value, attr)),)
    return run


def _case(fn: Callable[[str], str]) -> Callable:
    def run(ctx: EvalContext, seq: XDMSequence) -> XDMSequence:
        value = single_atomic(seq, "case mapping")
        text = "" if value is None else (value.value if value.kind in STRING_KINDS else xdm.lexical(value))
        return (xdm.string(fn(text)),)
    return run


def _arith(op: str) -> Callable:
    def run(ctx: EvalContext, left: XDMSequence, right: XDMSequence) -> XDMSequence:
        a, b = single_atomic(left, op), single_atomic(right, op)
        if a is None or b is None:
            return EMPTY
        return (arithmetic(op, a, b),)
    return run


def _treat(ctx: EvalContext, seq: XDMSequence, type_name: str) -> XDMSequence:
    for item in seq:
        if not xdm.matches_type(item, type_name):
            raise XQueryTypeError(f"{item!r} is not an instance of {type_name}", "XPDY0050")
    return seq


def _promote(ctx: EvalContext, seq: XDMSequence, type_name: str) -> XDMSequence:
    target = xdm.atomic_type(type_name)
    return tuple(xdm.promote(xdm.atomize_item(i), target) for i in seq)


def _doc(ctx: EvalContext, seq: XDMSequence) -> XDMSequence:
    return (ctx.catalog.document(_string_arg(seq, "doc")),)


def collection_documents(ctx: EvalContext, uri: str, path: tuple[str, ...] = ()) -> Iterator[Node]:
    """Every document (or pushed-down path node) of a collection, all partitions in order."""
    for handle in ctx.catalog.documents(uri):
        yield from parse_path(handle.path, handle, path, ctx.scan_stats)


def _collection(ctx: EvalContext, seq: XDMSequence) -> XDMSequence:
    return tuple(collection_documents(ctx, _string_arg(seq, "collection")))


def _concat(ctx: EvalContext, *args: XDMSequence) -> XDMSequence:
    parts = []
    for seq in args:
        value = single_atomic(seq, "concat")
        if value is not None:
            parts.append(value.value if value.kind in STRING_KINDS else xdm.lexical(value))
    return (xdm.string("".join(parts)),)


def _string(ctx: EvalContext, seq: XDMSequence) -> XDMSequence:
    if not seq:
        return (xdm.string(""),)
    if len(seq) > 1:
        raise XQueryTypeError("string() expects at most one item")
    item = seq[0]
    if isinstance(item, Node):
        return (xdm.string(item.string_value),)
    return (xdm.cast(item, AtomicType.STRING),)


def _generic(op: str) -> Callable:
    def run(ctx: EvalContext, left: XDMSequence, right: XDMSequence) -> XDMSequence:
        return (xdm.boolean(xdm.effective_boolean_value(value_compare(op, left, right))),)
    return run

SCALAR_FUNCTIONS: dict[str, Callable[..., XDMSequence]] = {
    "iterate": lambda ctx, seq: seq,
    "child": lambda ctx, seq, name: tuple(child_items(seq, name)),
    "attribute": lambda ctx, seq, name: tuple(attribute_items(seq, name)),
    "treat": _treat,
    "promote": _promote,
    "data": lambda ctx, seq: xdm.atomize(seq),
    "boolean": lambda ctx, seq: (xdm.boolean(xdm.effective_boolean_value(seq)),),
    "not": lambda ctx, seq: (xdm.boolean(not xdm.effective_boolean_value(seq)),),
    "true": lambda ctx: (xdm.boolean(True),),
    "false": lambda ctx: (xdm.boolean(False),),
    "sort-distinct-nodes-asc-or-atomics": lambda ctx, seq: sort_distinct(seq),
    "sort-nodes-asc-or-atomics": lambda ctx, seq: sort_nodes(seq),
    "distinct-nodes-or-atomics": lambda ctx, seq: distinct_nodes(seq),
    "doc": _doc,
    "collection": _collection,
    "exists": lambda ctx, seq: (xdm.boolean(bool(seq)),),
    "empty": lambda ctx, seq: (xdm.boolean(not seq),),
    "dateTime": _cast_fn(AtomicType.DATETIME),
    "decimal": _cast_fn(AtomicType.DECIMAL),
    "integer": _cast_fn(AtomicType.INTEGER),
    "double": _cast_fn(AtomicType.DOUBLE),
    "string": _string,
    "year-from-dateTime": _datetime_part("year"),
    "month-from-dateTime": _datetime_part("month"),
    "day-from-dateTime": _datetime_part("day"),
    "upper-case": _case(str.upper),
    "lower-case": _case(str.lower),
    "concat": _concat,
    "concatenate": lambda ctx, *seqs: xdm.sequence(*seqs),
    "negate": lambda ctx, seq: EMPTY if not seq else (negate(single_atomic(seq, "negate")),),
    **{op: _arith(op) for op in ("add", "subtract", "multiply", "divide")},
    **{f"value-{op}": (lambda o: lambda ctx, l, r: value_compare(o, l, r))(op) for op in _COMPARE},
    **{f"general-{op}": (lambda o: lambda ctx, l, r: general_compare(o, l, r))(op) for op in _COMPARE},
    "equal": _generic("eq"),
    "not-equal": _generic("ne"),
    "less-than": _generic("lt"),
    "less-than-or-equal": _generic("le"),
    "greater-than": _generic("gt"),
    "greater-than-or-equal": _generic("ge"),
}


# ── Evaluation ───────────────────────────────────────────────────────

def _arg(expr: Expr, row: Row, ctx: EvalContext):
    if isinstance(expr, TypeRef):
        return expr.name
    if isinstance(expr, Const) and expr.value.kind in STRING_KINDS:
        # step names and type names travel as plain strings
        return expr.value.value
    return evaluate(expr, row, ctx)


_NAME_ARGS = {"child": 1, "attribute": 1}


def evaluate(expr: Expr, row: Row, ctx: EvalContext) -> XDMSequence:
    """Scalar value of ``expr`` for ``row``."""
    if isinstance(expr, Var):
        try:
            return row[expr.id]
        except KeyError:
            raise XQueryTypeError(f"$${expr.id} is not bound in this tuple", "XPDY0002") from None
    if isinstance(expr, Const):
        return (expr.value,)
    if isinstance(expr, TypeRef):
        raise XQueryTypeError(f"type {expr.name} used as a value")
    name = expr.name
    if name in ("and", "or"):
        want = name == "or"
        for a in expr.args:
            if xdm.effective_boolean_value(evaluate(a, row, ctx)) is want:
                return (xdm.boolean(want),)
        return (xdm.boolean(not want),)
    fn = SCALAR_FUNCTIONS.get(name)
    if fn is None:
        raise XQueryTypeError(f"function {name}() is not available at runtime", "XPST0017")
    args = []
    for i, a in enumerate(expr.args):
        if _NAME_ARGS.get(name) == i or isinstance(a, TypeRef):
            args.append(_arg(a, row, ctx))
        else:
            args.append(evaluate(a, row, ctx))
    return fn(ctx, *args)


def unnest_items(expr: Expr, row: Row, ctx: EvalContext) -> Iterator[Item]:
    """Items produced one at a time by an unnesting expression."""
    if isinstance(expr, Call):
        if expr.name == "iterate":
            yield from evaluate(expr.args[0], row, ctx)
            return
        if expr.name in ("child", "attribute"):
            seq = evaluate(expr.args[0], row, ctx)
            name = _arg(expr.args[1], row, ctx)
            if expr.name == "child":
                yield from child_items(seq, name)
            else:
                yield from attribute_items(seq, name)
            return
    yield from evaluate(expr, row, ctx)
