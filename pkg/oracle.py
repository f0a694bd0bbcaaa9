"""
Naive interpreter — evaluates the core AST directly over fully loaded
documents.  FLWOR clauses are nested loops, path steps filter children and
then sort, aggregates run over materialized sequences.

It shares nothing with the engine's evaluation code: only the data model
and the document loader.  Agreement between the two is what the
equivalence tests measure.
"""

from __future__ import annotations

import logging
import math
from decimal import Decimal
from typing import Callable, Iterator

import xdm
from compiler import frontend as fe
from errors import BindError, XQueryTypeError
from xdm import INTEGER_KINDS, NUMERIC_KINDS, STRING_KINDS, AtomicType, AtomicValue, Node, XDMSequence
from xml_ingest import Catalog, parse_path

log = logging.getLogger(__name__)

Env = dict[str, XDMSequence]


# ── Values ───────────────────────────────────────────────────────────

def _one(seq: XDMSequence, where: str) -> AtomicValue | None:
    atoms = xdm.atomize(seq)
    if len(atoms) > 1:
        raise XQueryTypeError(f"{where}: more than one item")
    return atoms[0] if atoms else None


def _as_number(v: AtomicValue) -> AtomicValue:
    if v.kind is AtomicType.UNTYPED:
        return xdm.cast(v, AtomicType.DOUBLE)
    if v.kind not in NUMERIC_KINDS:
        raise XQueryTypeError(f"{v.kind.value} is not numeric")
    return v


def _is_floating(v: AtomicValue) -> bool:
    return v.kind in (AtomicType.DOUBLE, AtomicType.FLOAT)


def _arith(op: str, a: AtomicValue, b: AtomicValue) -> AtomicValue:
    a, b = _as_number(a), _as_number(b)
    if _is_floating(a) or _is_floating(b):
        kind = AtomicType.FLOAT if a.kind is b.kind is AtomicType.FLOAT else AtomicType.DOUBLE
        x, y = float(a.value), float(b.value)
        if op == "divide":
            if y != 0:
                return AtomicValue(kind, x / y)
            if x == 0 or math.isnan(x):
                return AtomicValue(kind, math.nan)
            negative = (x < 0) != (math.copysign(1, y) < 0)
            return AtomicValue(kind, -math.inf if negative else math.inf)
        return AtomicValue(kind, {"add": x + y, "subtract": x - y, "multiply": x * y}[op])
    if a.kind in INTEGER_KINDS and b.kind in INTEGER_KINDS and op != "divide":
        x, y = int(a.value), int(b.value)
        return xdm.integer({"add": x + y, "subtract": x - y, "multiply": x * y}[op])
    x, y = Decimal(a.value), Decimal(b.value)
    if op == "divide":
        if y == 0:
            raise XQueryTypeError("division by zero", "FOAR0001")
        return xdm.decimal(xdm.DECIMAL_CONTEXT.divide(x, y))
    return xdm.decimal({"add": x + y, "subtract": x - y, "multiply": x * y}[op])


def _negate(v: AtomicValue) -> AtomicValue:
    v = _as_number(v)
    return xdm.integer(-v.value) if v.kind in INTEGER_KINDS else AtomicValue(v.kind, -v.value)


def _compare(op: str, a: AtomicValue, b: AtomicValue) -> bool:
    if a.kind in NUMERIC_KINDS and b.kind in NUMERIC_KINDS:
        if _is_floating(a) or _is_floating(b):
            x, y = float(a.value), float(b.value)
        else:
            x, y = Decimal(a.value), Decimal(b.value)
    elif a.kind in STRING_KINDS and b.kind in STRING_KINDS:
        x, y = a.value, b.value
    elif a.kind is b.kind:
        x, y = a.value, b.value
        if op not in ("eq", "ne") and a.kind not in (
            AtomicType.BOOLEAN, AtomicType.DATETIME, AtomicType.DATE, AtomicType.TIME,
        ):
            raise XQueryTypeError(f"{a.kind.value} values are not ordered")
    else:
        raise XQueryTypeError(f"cannot compare {a.kind.value} with {b.kind.value}")
    if op == "eq":
        return x == y
    if op == "ne":
        return x != y
    if op == "lt":
        return x < y
    if op == "le":
        return x <= y
    if op == "gt":
        return x > y
    return x >= y


def _untyped_to_string(v: AtomicValue) -> AtomicValue:
    return xdm.string(v.value) if v.kind is AtomicType.UNTYPED else v


def value_comparison(op: str, left: XDMSequence, right: XDMSequence) -> XDMSequence:
    a, b = _one(left, op), _one(right, op)
    if a is None or b is None:
        return ()
    return (xdm.boolean(_compare(op, _untyped_to_string(a), _untyped_to_string(b))),)


def general_comparison(op: str, left: XDMSequence, right: XDMSequence) -> XDMSequence:
    for a in xdm.atomize(left):
        for b in xdm.atomize(right):
            if a.kind is AtomicType.UNTYPED and b.kind is AtomicType.UNTYPED:
                x, y = xdm.string(a.value), xdm.string(b.value)
            elif a.kind is AtomicType.UNTYPED:
                x, y = xdm.cast(a, AtomicType.DOUBLE if b.kind in NUMERIC_KINDS else b.kind), b
            elif b.kind is AtomicType.UNTYPED:
                x, y = a, xdm.cast(b, AtomicType.DOUBLE if a.kind in NUMERIC_KINDS else a.kind)
            else:
                x, y = a, b
            if _compare(op, x, y):
                return (xdm.boolean(True),)
    return (xdm.boolean(False),)


# ── Aggregates ───────────────────────────────────────────────────────

def _numbers(seq: XDMSequence, fn: str) -> list[AtomicValue]:
    out = []
    for v in xdm.atomize(seq):
        try:
            out.append(_as_number(v))
        except XQueryTypeError as exc:
            raise XQueryTypeError(f"{fn}(): {exc}", "FORG0006") from exc
    return out


def _sum(seq: XDMSequence) -> XDMSequence:
    numbers = _numbers(seq, "sum")
    if not numbers:
        return (xdm.integer(0),)
    total = numbers[0]
    for v in numbers[1:]:
        total = _arith("add", total, v)
    return (total,)


def _avg(seq: XDMSequence) -> XDMSequence:
    numbers = _numbers(seq, "avg")
    if not numbers:
        return ()
    (total,) = _sum(tuple(numbers))
    return (_arith("divide", total, xdm.integer(len(numbers))),)


def _extreme(seq: XDMSequence, op: str) -> XDMSequence:
    values = [xdm.cast(v, AtomicType.DOUBLE) if v.kind is AtomicType.UNTYPED else v for v in xdm.atomize(seq)]
    if not values:
        return ()
    for v in values:
        if _is_floating(v) and math.isnan(v.value):
            return (v,)
    best = values[0]
    for v in values[1:]:
        if _compare(op, v, best):
            best = v
    return (best,)


# ── Nodes ────────────────────────────────────────────────────────────

def _children(seq: XDMSequence, axis: str, name: str) -> XDMSequence:
    out: list[Node] = []
    for item in seq:
        if not isinstance(item, Node):
            raise XQueryTypeError(f"{axis} step on an atomic value", "XPTY0019")
        if axis == "child":
            out.extend(c for c in item.children if c.kind is xdm.NodeKind.ELEMENT and c.name == name)
        else:
            out.extend(a for a in item.attributes if a.name == name)
    return tuple(out)


def _document_order(seq: XDMSequence, dedupe: bool, sort: bool) -> XDMSequence:
    nodes = [i for i in seq if isinstance(i, Node)]
    if not nodes:
        return seq
    if len(nodes) != len(seq):
        raise XQueryTypeError("mixed nodes and atomic values in a path result", "XPTY0018")
    if dedupe:
        seen: dict = {}
        for n in nodes:
            seen.setdefault(tuple(n.id), n)
        nodes = list(seen.values())
    if sort:
        nodes.sort(key=lambda n: tuple(n.id))
    return tuple(nodes)


# ── Interpreter ──────────────────────────────────────────────────────

class NaiveInterpreter:
    def __init__(self, catalog: Catalog) -> None:
        self.catalog = catalog
        self.functions: dict[str, Callable[..., XDMSequence]] = self._function_table()

    def collection(self, uri: str) -> XDMSequence:
        docs = []
        for handle in self.catalog.documents(uri):
            docs.extend(parse_path(handle.path, handle))
        return tuple(docs)

    def _string_arg(self, seq: XDMSequence) -> str:
        v = _one(seq, "uri")
        if v is None:
            raise XQueryTypeError("empty URI")
        return str(v.value)

    def _function_table(self) -> dict[str, Callable[..., XDMSequence]]:
        def cast_to(kind: AtomicType):
            def run(seq):
                v = _one(seq, kind.value)
                return () if v is None else (xdm.cast(v, kind),)
            return run

        def part(name: str):
            def run(seq):
                v = _one(seq, name)
                return () if v is None else (xdm.integer(getattr(xdm.promote(v, AtomicType.DATETIME).value, name)),)
            return run

        def text_of(seq) -> str:
            v = _one(seq, "string")
            if v is None:
                return ""
            return v.value if v.kind in STRING_KINDS else xdm.lexical(v)

        def arith(op: str):
            def run(left, right):
                a, b = _one(left, op), _one(right, op)
                return () if a is None or b is None else (_arith(op, a, b),)
            return run

        table: dict[str, Callable[..., XDMSequence]] = {
            "doc": lambda s: (self.catalog.document(self._string_arg(s)),),
            "collection": lambda s: self.collection(self._string_arg(s)),
            "data": xdm.atomize,
            "boolean": lambda s: (xdm.boolean(xdm.effective_boolean_value(s)),),
            "not": lambda s: (xdm.boolean(not xdm.effective_boolean_value(s)),),
            "true": lambda: (xdm.boolean(True),),
            "false": lambda: (xdm.boolean(False),),
            "count": lambda s: (xdm.integer(len(s)),),
            "sum": _sum,
            "avg": _avg,
            "min": lambda s: _extreme(s, "lt"),
            "max": lambda s: _extreme(s, "gt"),
            "exists": lambda s: (xdm.boolean(len(s) > 0),),
            "empty": lambda s: (xdm.boolean(len(s) == 0),),
            "dateTime": cast_to(AtomicType.DATETIME),
            "decimal": cast_to(AtomicType.DECIMAL),
            "integer": cast_to(AtomicType.INTEGER),
            "double": cast_to(AtomicType.DOUBLE),
            "string": lambda s: (xdm.string(text_of(s)),),
            "year-from-dateTime": part("year"),
            "month-from-dateTime": part("month"),
            "day-from-dateTime": part("day"),
            "upper-case": lambda s: (xdm.string(text_of(s).upper()),),
            "lower-case": lambda s: (xdm.string(text_of(s).lower()),),
            "concat": lambda *ss: (xdm.string("".join(text_of(s) for s in ss)),),
            "concatenate": lambda *ss: tuple(i for s in ss for i in s),
            "negate": lambda s: () if not s else (_negate(_one(s, "negate")),),
            "sort-distinct-nodes-asc-or-atomics": lambda s: _document_order(s, True, True),
            "sort-nodes-asc-or-atomics": lambda s: _document_order(s, False, True),
            "distinct-nodes-or-atomics": lambda s: _document_order(s, True, False),
        }
        for op in ("add", "subtract", "multiply", "divide"):
            table[op] = arith(op)
        for op in fe.VALUE_OPS:
            table[f"value-{op}"] = (lambda o: lambda l, r: value_comparison(o, l, r))(op)
            table[f"general-{op}"] = (lambda o: lambda l, r: general_comparison(o, l, r))(op)
        return table

    # expressions

    def eval(self, e, env: Env) -> XDMSequence:
        if isinstance(e, fe.Literal):
            return (e.value,)
        if isinstance(e, fe.VarRef):
            if e.name not in env:
                raise BindError(e.name)
            return env[e.name]
        if isinstance(e, fe.SequenceExpr):
            return tuple(i for item in e.items for i in self.eval(item, env))
        if isinstance(e, fe.Iterate):
            out: list = []
            for item in self.eval(e.input, env):
                out.extend(self.eval(e.body, {**env, e.var: (item,)}))
            return tuple(out)
        if isinstance(e, fe.FLWOR):
            out = []
            for bound in self.bindings(e, env):
                out.extend(self.eval(e.result, bound))
            return tuple(out)
        if isinstance(e, fe.Quantified):
            return (xdm.boolean(self.quantified(e, env)),)
        if isinstance(e, fe.FunctionCall):
            return self.call(e, env)
        raise XQueryTypeError(f"{type(e).__name__} is not a core expression")

    def call(self, e: fe.FunctionCall, env: Env) -> XDMSequence:
        name = e.name
        if name in ("and", "or"):
            want = name == "or"
            for a in e.args:
                if xdm.effective_boolean_value(self.eval(a, env)) == want:
                    return (xdm.boolean(want),)
            return (xdm.boolean(not want),)
        if name in ("child", "attribute"):
            return _children(self.eval(e.args[0], env), name, e.args[1].value.value)
        if name == "treat":
            seq = self.eval(e.args[0], env)
            type_name = e.args[1].name
            if not all(xdm.matches_type(i, type_name) for i in seq):
                raise XQueryTypeError(f"value does not match {type_name}", "XPDY0050")
            return seq
        if name == "promote":
            target = xdm.atomic_type(e.args[1].name)
            return tuple(xdm.promote(v, target) for v in xdm.atomize(self.eval(e.args[0], env)))
        fn = self.functions.get(name)
        if fn is None:
            raise XQueryTypeError(f"unknown function {name}()", "XPST0017")
        return fn(*(self.eval(a, env) for a in e.args))

    def bindings(self, e: fe.FLWOR, env: Env) -> Iterator[Env]:
        def expand(i: int, current: Env) -> Iterator[Env]:
            if i == len(e.clauses):
                if e.where is None or xdm.effective_boolean_value(self.eval(e.where, current)):
                    yield current
                return
            clause = e.clauses[i]
            value = self.eval(clause.expr, current)
            if isinstance(clause, fe.LetClause):
                yield from expand(i + 1, {**current, clause.var: value})
                return
            for item in value:
                yield from expand(i + 1, {**current, clause.var: (item,)})

        yield from expand(0, env)

    def quantified(self, e: fe.Quantified, env: Env) -> bool:
        def combos(i: int, current: Env) -> Iterator[Env]:
            if i == len(e.bindings):
                yield current
                return
            var, source = e.bindings[i]
            for item in self.eval(source, current):
                yield from combos(i + 1, {**current, var: (item,)})

        some = e.quantifier == "some"
        for bound in combos(0, env):
            if xdm.effective_boolean_value(self.eval(e.condition, bound)) == some:
                return some
        return not some


def eval_naive(core, catalog: Catalog, env: Env | None = None) -> XDMSequence:
    """Result of a normalized query by direct interpretation."""
    result = NaiveInterpreter(catalog).eval(core, dict(env or {}))
    log.info("naive evaluation: %d item(s)", len(result))
    return result


def run_naive(text: str, catalog: Catalog) -> XDMSequence:
    return eval_naive(fe.normalize(fe.parse_query(text)), catalog)
