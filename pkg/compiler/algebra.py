"""
Logical tuple algebra — operators, expressions, the textual plan format
(printer and parser), alpha-equivalence, free variables, the plan
validator, and the small tree-rewriting helpers the rules share.

Plan text, one operator per line from the root down to the source:

    DISTRIBUTE-RESULT( $$13 )
    UNNEST( $$13:iterate($$12) )
    SUBPLAN {
      AGGREGATE( $$11:create_sequence(child(treat($$9, element_node), "book")) )
      UNNEST( $$9:iterate($$7) )
      NESTED-TUPLE-SOURCE
    }
    JOIN( boolean(value-eq($$27, $$28)) ) {
      ...first branch...
    } {
      ...second branch...
    }
    EMPTY-TUPLE-SOURCE
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from decimal import Decimal
from enum import Enum
from typing import Callable, Iterator, Union

import xdm
from errors import PlanSyntaxError
from xdm import AtomicType, AtomicValue


# ── Expressions ──────────────────────────────────────────────────────

@dataclass(frozen=True)
class Var:
    id: int

    def __str__(self) -> str:
        return f"$${self.id}"


@dataclass(frozen=True)
class Const:
    value: AtomicValue


@dataclass(frozen=True)
class TypeRef:
    name: str


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple = ()


Expr = Union[Var, Const, TypeRef, Call]


class ExprKind(str, Enum):
    SCALAR = "scalar"
    AGGREGATE = "aggregate"
    UNNESTING = "unnesting"


AGGREGATE_FUNCTIONS = frozenset({
    "create_sequence", "count", "sum", "min", "max", "avg",
    "avg-local", "avg-global", "non-empty-stream", "empty-stream",
})
UNNESTING_FUNCTIONS = frozenset({"iterate", "child", "attribute"})
SEQUENCE_AGGREGATES = frozenset({"count", "sum", "min", "max", "avg"})

# Known function arities; None means variadic.
FUNCTION_ARITY: dict[str, int | None] = {
    "iterate": 1, "child": 2, "attribute": 2, "create_sequence": 1,
    "treat": 2, "promote": 2, "data": 1, "boolean": 1, "not": 1,
    "and": None, "or": None, "true": 0, "false": 0,
    "sort-distinct-nodes-asc-or-atomics": 1, "sort-nodes-asc-or-atomics": 1,
    "distinct-nodes-or-atomics": 1,
    "doc": 1, "collection": 1,
    "count": 1, "sum": 1, "min": 1, "max": 1, "avg": 1, "avg-local": 1, "avg-global": 1,
    "non-empty-stream": 0, "empty-stream": 0,
    "exists": 1, "empty": 1, "dateTime": 1, "decimal": 1, "integer": 1, "double": 1, "string": 1,
    "year-from-dateTime": 1, "month-from-dateTime": 1, "day-from-dateTime": 1,
    "upper-case": 1, "lower-case": 1, "concat": None, "concatenate": None,
    "negate": 1, "add": 2, "subtract": 2, "multiply": 2, "divide": 2,
    **{f"value-{op}": 2 for op in ("eq", "ne", "lt", "le", "gt", "ge")},
    **{f"general-{op}": 2 for op in ("eq", "ne", "lt", "le", "gt", "ge")},
    # generic comparison forms used while choosing physical operators
    "equal": 2, "not-equal": 2, "less-than": 2, "less-than-or-equal": 2,
    "greater-than": 2, "greater-than-or-equal": 2,
}


def expr_variables(expr: Expr) -> set[int]:
    if isinstance(expr, Var):
        return {expr.id}
    if isinstance(expr, Call):
        out: set[int] = set()
        for arg in expr.args:
            out |= expr_variables(arg)
        return out
    return set()


def count_var_reads(expr: Expr, var: int) -> int:
    if isinstance(expr, Var):
        return int(expr.id == var)
    if isinstance(expr, Call):
        return sum(count_var_reads(a, var) for a in expr.args)
    return 0


def substitute(expr: Expr, mapping: dict[int, Expr]) -> Expr:
    if isinstance(expr, Var):
        return mapping.get(expr.id, expr)
    if isinstance(expr, Call):
        return Call(expr.name, tuple(substitute(a, mapping) for a in expr.args))
    return expr


def call(name: str, *args: Expr) -> Call:
    return Call(name, tuple(args))


def const_string(value: str) -> Const:
    return Const(xdm.string(value))


# ── Operators ────────────────────────────────────────────────────────

class OpKind(str, Enum):
    DISTRIBUTE_RESULT = "DISTRIBUTE-RESULT"
    ASSIGN = "ASSIGN"
    UNNEST = "UNNEST"
    AGGREGATE = "AGGREGATE"
    SELECT = "SELECT"
    SUBPLAN = "SUBPLAN"
    JOIN = "JOIN"
    DATASCAN = "DATASCAN"
    EMPTY_TUPLE_SOURCE = "EMPTY-TUPLE-SOURCE"
    NESTED_TUPLE_SOURCE = "NESTED-TUPLE-SOURCE"


SOURCES = frozenset({OpKind.EMPTY_TUPLE_SOURCE, OpKind.NESTED_TUPLE_SOURCE})
BINDING_OPS = frozenset({OpKind.ASSIGN, OpKind.UNNEST, OpKind.AGGREGATE})


@dataclass(frozen=True)
class LogicalOperator:
    """
    One operator.  ``variables``/``expressions`` pair up for ASSIGN, UNNEST
    and AGGREGATE; DISTRIBUTE-RESULT, SELECT and JOIN carry expressions
    only; DATASCAN carries the collection call, its variable and the
    pushed-down ``path``.  ``two_step`` holds (local, global) function
    names per aggregate expression once annotated.
    """

    kind: OpKind
    variables: tuple[int, ...] = ()
    expressions: tuple[Expr, ...] = ()
    inputs: tuple["LogicalOperator", ...] = ()
    nested: tuple["LogicalOperator", ...] = ()
    path: tuple[str, ...] = ()
    two_step: tuple[tuple[str, str], ...] = ()

    @property
    def input(self) -> "LogicalOperator":
        return self.inputs[0]

    def with_input(self, new_input: "LogicalOperator") -> "LogicalOperator":
        return replace(self, inputs=(new_input,))


@dataclass(frozen=True)
class LogicalPlan:
    root: LogicalOperator

    @property
    def result_variable(self) -> int | None:
        exprs = self.root.expressions
        if self.root.kind is OpKind.DISTRIBUTE_RESULT and exprs and isinstance(exprs[0], Var):
            return exprs[0].id
        return None


def ets() -> LogicalOperator:
    return LogicalOperator(OpKind.EMPTY_TUPLE_SOURCE)


def nts() -> LogicalOperator:
    return LogicalOperator(OpKind.NESTED_TUPLE_SOURCE)


def assign(var: int, expr: Expr, below: LogicalOperator) -> LogicalOperator:
    return LogicalOperator(OpKind.ASSIGN, (var,), (expr,), (below,))


def unnest(var: int, expr: Expr, below: LogicalOperator) -> LogicalOperator:
    return LogicalOperator(OpKind.UNNEST, (var,), (expr,), (below,))


def aggregate(var: int, expr: Expr, below: LogicalOperator) -> LogicalOperator:
    return LogicalOperator(OpKind.AGGREGATE, (var,), (expr,), (below,))


def select(cond: Expr, below: LogicalOperator) -> LogicalOperator:
    return LogicalOperator(OpKind.SELECT, (), (cond,), (below,))


def subplan(nested_root: LogicalOperator, below: LogicalOperator) -> LogicalOperator:
    return LogicalOperator(OpKind.SUBPLAN, (), (), (below,), (nested_root,))


def join(cond: Expr, left: LogicalOperator, right: LogicalOperator) -> LogicalOperator:
    return LogicalOperator(OpKind.JOIN, (), (cond,), (left, right))


def datascan(collection: str, var: int, below: LogicalOperator, path: tuple[str, ...] = ()) -> LogicalOperator:
    return LogicalOperator(OpKind.DATASCAN, (var,), (call("collection", const_string(collection)),), (below,), path=path)


def distribute_result(var: int, below: LogicalOperator) -> LogicalOperator:
    return LogicalOperator(OpKind.DISTRIBUTE_RESULT, (), (Var(var),), (below,))


def datascan_collection(op: LogicalOperator) -> str:
    coll = op.expressions[0]
    assert isinstance(coll, Call) and isinstance(coll.args[0], Const)
    return coll.args[0].value.value


def expression_kind(op: LogicalOperator) -> ExprKind:
    """Kind of the top-level expressions of ``op``."""
    if op.kind is OpKind.AGGREGATE:
        return ExprKind.AGGREGATE
    if op.kind in (OpKind.UNNEST, OpKind.DATASCAN):
        return ExprKind.UNNESTING
    return ExprKind.SCALAR


# ── Traversal ────────────────────────────────────────────────────────

def walk(op: LogicalOperator) -> Iterator[LogicalOperator]:
    """Every operator, pre-order, nested plans before inputs."""
    yield op
    for n in op.nested:
        yield from walk(n)
    for i in op.inputs:
        yield from walk(i)


def produced_variables(op: LogicalOperator) -> set[int]:
    return set(op.variables)


def all_produced(root: LogicalOperator) -> set[int]:
    out: set[int] = set()
    for op in walk(root):
        out |= set(op.variables)
    return out


def max_variable(root: LogicalOperator) -> int:
    ids = all_produced(root)
    for op in walk(root):
        for e in op.expressions:
            ids |= expr_variables(e)
    return max(ids, default=0)


def var_uses(root: LogicalOperator, var: int) -> int:
    """Number of reads of ``var`` anywhere in the plan, nested plans included."""
    return sum(count_var_reads(e, var) for op in walk(root) for e in op.expressions)


def free_variables(op: LogicalOperator) -> set[int]:
    """Variables read by ``op`` (and its nested plans) that it does not produce."""
    read: set[int] = set()
    for e in op.expressions:
        read |= expr_variables(e)
    for n in op.nested:
        inner_read: set[int] = set()
        inner_made: set[int] = set()
        for inner in walk(n):
            for e in inner.expressions:
                inner_read |= expr_variables(e)
            inner_made |= set(inner.variables)
        read |= inner_read - inner_made
    return read - set(op.variables)


def live_variables(op: LogicalOperator, outer: frozenset[int] = frozenset()) -> set[int]:
    """Variables present in the tuples ``op`` emits."""
    kind = op.kind
    if kind is OpKind.EMPTY_TUPLE_SOURCE:
        return set()
    if kind is OpKind.NESTED_TUPLE_SOURCE:
        return set(outer)
    if kind is OpKind.JOIN:
        return live_variables(op.inputs[0], outer) | live_variables(op.inputs[1], outer)
    below = live_variables(op.input, outer)
    if kind is OpKind.AGGREGATE:
        return set(op.variables)
    if kind is OpKind.SUBPLAN:
        nested_live: set[int] = set()
        for n in op.nested:
            nested_live |= live_variables(n, frozenset(below))
        return below | nested_live
    if kind is OpKind.DISTRIBUTE_RESULT:
        return below
    return below | set(op.variables)


def rewrite_first(
    op: LogicalOperator,
    fn: Callable[[LogicalOperator], LogicalOperator | None],
) -> LogicalOperator | None:
    """
    Apply ``fn`` at the first operator (pre-order, nested plans before
    inputs) where it returns a replacement; None when nothing matched.
    """
    replaced = fn(op)
    if replaced is not None:
        return replaced
    for i, n in enumerate(op.nested):
        new = rewrite_first(n, fn)
        if new is not None:
            nested = op.nested[:i] + (new,) + op.nested[i + 1:]
            return replace(op, nested=nested)
    for i, child in enumerate(op.inputs):
        new = rewrite_first(child, fn)
        if new is not None:
            inputs = op.inputs[:i] + (new,) + op.inputs[i + 1:]
            return replace(op, inputs=inputs)
    return None


def replace_operator(
    root: LogicalOperator,
    target: LogicalOperator,
    new: LogicalOperator,
) -> LogicalOperator:
    """Swap the operator object ``target`` (by identity) for ``new``."""
    result = rewrite_first(root, lambda op: new if op is target else None)
    if result is None:
        raise ValueError("operator not found in plan")
    return result


def count_nested_sources(op: LogicalOperator) -> int:
    """NESTED-TUPLE-SOURCE leaves reachable through inputs (not deeper nested plans)."""
    if op.kind is OpKind.NESTED_TUPLE_SOURCE:
        return 1
    return sum(count_nested_sources(i) for i in op.inputs)


def graft_source(op: LogicalOperator, leaf: LogicalOperator) -> LogicalOperator:
    """Replace the NESTED-TUPLE-SOURCE leaves of a nested chain by ``leaf``."""
    if op.kind is OpKind.NESTED_TUPLE_SOURCE:
        return leaf
    if not op.inputs:
        return op
    return replace(op, inputs=tuple(graft_source(i, leaf) for i in op.inputs))


def substitute_everywhere(root: LogicalOperator, mapping: dict[int, Expr]) -> LogicalOperator:
    return map_expressions(root, lambda e: substitute(e, mapping))


def map_expressions(op: LogicalOperator, fn: Callable[[Expr], Expr]) -> LogicalOperator:
    """Rebuild the whole tree with ``fn`` applied to every top-level expression."""
    return replace(
        op,
        expressions=tuple(fn(e) for e in op.expressions),
        inputs=tuple(map_expressions(i, fn) for i in op.inputs),
        nested=tuple(map_expressions(n, fn) for n in op.nested),
    )


# ── Printing ─────────────────────────────────────────────────────────

def format_const(value: AtomicValue) -> str:
    kind = value.kind
    if kind in xdm.STRING_KINDS:
        return '"' + value.value.replace('"', '""') + '"'
    if kind is AtomicType.BOOLEAN:
        return "true" if value.value else "false"
    if kind in xdm.INTEGER_KINDS:
        return str(value.value)
    if kind is AtomicType.DECIMAL:
        text = xdm.lexical(value)
        return text if "." in text else text + ".0"
    if kind in (AtomicType.DOUBLE, AtomicType.FLOAT):
        text = repr(float(value.value)).replace("e", "E")
        return text if "E" in text else text + "E0"
    return f'{kind.value}("{xdm.lexical(value)}")'


def format_expr(expr: Expr) -> str:
    if isinstance(expr, Var):
        return str(expr)
    if isinstance(expr, Const):
        return format_const(expr.value)
    if isinstance(expr, TypeRef):
        return expr.name
    return f"{expr.name}({', '.join(format_expr(a) for a in expr.args)})"


def _format_bindings(op: LogicalOperator) -> str:
    return ", ".join(f"$${v}:{format_expr(e)}" for v, e in zip(op.variables, op.expressions))


def _header(op: LogicalOperator) -> str:
    kind = op.kind
    if kind in SOURCES:
        return kind.value
    if kind in BINDING_OPS:
        text = f"{kind.value}( {_format_bindings(op)} )"
        if op.two_step:
            local = ";".join(l for l, _ in op.two_step)
            glob = ";".join(g for _, g in op.two_step)
            text += f" [local={local}, global={glob}]"
        return text
    if kind is OpKind.DATASCAN:
        args = [format_expr(op.expressions[0]), f"$${op.variables[0]}"]
        if op.path:
            args.append('"/' + "/".join(op.path) + '"')
        return f"DATASCAN( {', '.join(args)} )"
    if kind is OpKind.SUBPLAN:
        return "SUBPLAN {"
    return f"{kind.value}( {', '.join(format_expr(e) for e in op.expressions)} )"


def _print_lines(op: LogicalOperator, indent: str, out: list[str]) -> None:
    while True:
        out.append(indent + _header(op))
        if op.kind is OpKind.SUBPLAN:
            for n in op.nested:
                _print_lines(n, indent + "  ", out)
            out.append(indent + "}")
        if op.kind is OpKind.JOIN:
            out[-1] += " {"
            _print_lines(op.inputs[0], indent + "  ", out)
            out.append(indent + "} {")
            _print_lines(op.inputs[1], indent + "  ", out)
            out.append(indent + "}")
            return
        if not op.inputs:
            return
        op = op.input


def print_plan(plan: LogicalPlan | LogicalOperator) -> str:
    root = plan.root if isinstance(plan, LogicalPlan) else plan
    lines: list[str] = []
    _print_lines(root, "", lines)
    return "\n".join(lines) + "\n"


# ── Parsing ──────────────────────────────────────────────────────────

_PLAN_TOKEN_RE = re.compile(
    r"""
     (?P<nl>\n)
    |(?P<ws>[ \t\r]+)
    |(?P<var>\$\$\d+)
    |(?P<number>[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
    |(?P<string>"(?:[^"]|"")*")
    |(?P<name>[A-Za-z_][\w\-]*)
    |(?P<sym>[(){}\[\],:=;])
    """,
    re.VERBOSE,
)


class _PlanParser:
    def __init__(self, text: str) -> None:
        self.tokens: list[tuple[str, str, int]] = []
        line, pos = 1, 0
        while pos < len(text):
            m = _PLAN_TOKEN_RE.match(text, pos)
            if m is None:
                raise PlanSyntaxError(f"unexpected character {text[pos]!r}", line)
            kind = m.lastgroup
            if kind == "nl":
                line += 1
            elif kind != "ws":
                self.tokens.append((kind, m.group(), line))
            pos = m.end()
        self.tokens.append(("eof", "", line))
        self.pos = 0

    @property
    def tok(self) -> tuple[str, str, int]:
        return self.tokens[self.pos]

    def advance(self) -> tuple[str, str, int]:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str) -> PlanSyntaxError:
        kind, value, line = self.tok
        return PlanSyntaxError(f"{message}, found {value or 'end of input'!r}", line)

    def expect(self, value: str) -> None:
        if self.tok[1] != value:
            raise self.error(f"expected {value!r}")
        self.advance()

    def accept(self, value: str) -> bool:
        if self.tok[1] == value and self.tok[0] in ("sym", "name"):
            self.advance()
            return True
        return False

    def parse(self) -> LogicalOperator:
        root = self.chain()
        if self.tok[0] != "eof":
            raise self.error("trailing text after plan")
        return root

    def chain(self) -> LogicalOperator:
        kind_tok = self.tok
        if kind_tok[0] != "name":
            raise self.error("expected an operator name")
        try:
            kind = OpKind(kind_tok[1])
        except ValueError:
            raise self.error("unknown operator") from None
        self.advance()
        if kind in SOURCES:
            if self.accept("("):
                self.expect(")")
            return LogicalOperator(kind)
        if kind is OpKind.SUBPLAN:
            self.expect("{")
            nested = self.chain()
            self.expect("}")
            return LogicalOperator(kind, nested=(nested,), inputs=(self.chain(),))
        self.expect("(")
        if kind in BINDING_OPS:
            variables, exprs = self.bindings()
            self.expect(")")
            two_step = self.annotation() if kind is OpKind.AGGREGATE else ()
            return LogicalOperator(kind, variables, exprs, (self.chain(),), two_step=two_step)
        if kind is OpKind.DATASCAN:
            coll = self.expr()
            self.expect(",")
            var = self.var()
            path: tuple[str, ...] = ()
            if self.accept(","):
                text = self.string()
                path = tuple(s for s in text.split("/") if s)
            self.expect(")")
            return LogicalOperator(kind, (var,), (coll,), (self.chain(),), path=path)
        exprs = [self.expr()]
        while self.accept(","):
            exprs.append(self.expr())
        self.expect(")")
        if kind is OpKind.JOIN:
            self.expect("{")
            left = self.chain()
            self.expect("}")
            self.expect("{")
            right = self.chain()
            self.expect("}")
            return LogicalOperator(kind, (), tuple(exprs), (left, right))
        return LogicalOperator(kind, (), tuple(exprs), (self.chain(),))

    def bindings(self) -> tuple[tuple[int, ...], tuple[Expr, ...]]:
        variables, exprs = [], []
        while True:
            variables.append(self.var())
            self.expect(":")
            exprs.append(self.expr())
            if not self.accept(","):
                return tuple(variables), tuple(exprs)

    def annotation(self) -> tuple[tuple[str, str], ...]:
        if not self.accept("["):
            return ()
        parts: dict[str, list[str]] = {}
        while True:
            key = self.advance()[1]
            self.expect("=")
            names = [self.advance()[1]]
            while self.accept(";"):
                names.append(self.advance()[1])
            parts[key] = names
            if not self.accept(","):
                break
        self.expect("]")
        if set(parts) != {"local", "global"} or len(parts["local"]) != len(parts["global"]):
            raise self.error("malformed two-step annotation")
        return tuple(zip(parts["local"], parts["global"]))

    def var(self) -> int:
        if self.tok[0] != "var":
            raise self.error("expected a $$ variable")
        return int(self.advance()[1][2:])

    def string(self) -> str:
        if self.tok[0] != "string":
            raise self.error("expected a string")
        return self.advance()[1][1:-1].replace('""', '"')

    def expr(self) -> Expr:
        kind, value, _ = self.tok
        if kind == "var":
            return Var(self.var())
        if kind == "string":
            return Const(xdm.string(self.string()))
        if kind == "number":
            self.advance()
            if "e" in value or "E" in value:
                return Const(xdm.double(float(value)))
            if "." in value:
                return Const(xdm.decimal(Decimal(value)))
            return Const(xdm.integer(int(value)))
        if kind == "name":
            self.advance()
            if self.accept("("):
                args: list[Expr] = []
                if not self.accept(")"):
                    args.append(self.expr())
                    while self.accept(","):
                        args.append(self.expr())
                    self.expect(")")
                typed = _typed_constant(value, args)
                return typed if typed is not None else Call(value, tuple(args))
            if value in ("true", "false"):
                return Const(xdm.boolean(value == "true"))
            return TypeRef(value)
        raise self.error("expected an expression")


def _typed_constant(name: str, args: list[Expr]) -> Const | None:
    """``dateTime("...")``-style constants written by ``format_const``."""
    if len(args) != 1 or not isinstance(args[0], Const) or args[0].value.kind is not AtomicType.STRING:
        return None
    if name not in {"untypedAtomic", "date", "time", "duration", "QName", "binary", "float", "byte", "short", "long"}:
        return None
    return Const(xdm.cast(args[0].value, AtomicType(name)))


def parse_plan(text: str) -> LogicalPlan:
    return LogicalPlan(_PlanParser(text).parse())


# ── Alpha-equivalence ────────────────────────────────────────────────

class _Renaming:
    def __init__(self) -> None:
        self.forward: dict[int, int] = {}
        self.backward: dict[int, int] = {}

    def bind(self, a: int, b: int) -> bool:
        if a in self.forward or b in self.backward:
            return self.forward.get(a) == b and self.backward.get(b) == a
        self.forward[a] = b
        self.backward[b] = a
        return True


def _expr_equal(a: Expr, b: Expr, ren: _Renaming) -> bool:
    if isinstance(a, Var) and isinstance(b, Var):
        return ren.bind(a.id, b.id)
    if isinstance(a, Call) and isinstance(b, Call):
        return (
            a.name == b.name
            and len(a.args) == len(b.args)
            and all(_expr_equal(x, y, ren) for x, y in zip(a.args, b.args))
        )
    return type(a) is type(b) and a == b


def _op_equal(a: LogicalOperator, b: LogicalOperator, ren: _Renaming, annotations: bool) -> bool:
    if (
        a.kind is not b.kind
        or a.path != b.path
        or len(a.variables) != len(b.variables)
        or len(a.expressions) != len(b.expressions)
        or len(a.inputs) != len(b.inputs)
        or len(a.nested) != len(b.nested)
    ):
        return False
    if annotations and a.two_step != b.two_step:
        return False
    if not all(ren.bind(x, y) for x, y in zip(a.variables, b.variables)):
        return False
    if not all(_expr_equal(x, y, ren) for x, y in zip(a.expressions, b.expressions)):
        return False
    return all(_op_equal(x, y, ren, annotations) for x, y in zip(a.nested, b.nested)) and all(
        _op_equal(x, y, ren, annotations) for x, y in zip(a.inputs, b.inputs)
    )


def plan_alpha_equal(
    a: LogicalPlan | LogicalOperator,
    b: LogicalPlan | LogicalOperator,
    annotations: bool = True,
) -> bool:
    """Isomorphic under a bijective renaming of $$ variables."""
    ra = a.root if isinstance(a, LogicalPlan) else a
    rb = b.root if isinstance(b, LogicalPlan) else b
    return _op_equal(ra, rb, _Renaming(), annotations)


# ── Validation ───────────────────────────────────────────────────────

class PlanInvalid(Exception):
    pass


def _check_expr(expr: Expr, top_kind: ExprKind, top: bool, live: set[int]) -> None:
    if isinstance(expr, Var):
        if expr.id not in live:
            raise PlanInvalid(f"$${expr.id} is not live here")
        return
    if not isinstance(expr, Call):
        return
    arity = FUNCTION_ARITY.get(expr.name, -1)
    if arity == -1:
        raise PlanInvalid(f"unknown function {expr.name}")
    if arity is not None and arity != len(expr.args):
        raise PlanInvalid(f"{expr.name} takes {arity} arguments, got {len(expr.args)}")
    if expr.name in AGGREGATE_FUNCTIONS - SEQUENCE_AGGREGATES and not (top and top_kind is ExprKind.AGGREGATE):
        raise PlanInvalid(f"aggregate {expr.name} outside AGGREGATE")
    if expr.name == "iterate" and not (top and top_kind is ExprKind.UNNESTING):
        raise PlanInvalid("iterate outside UNNEST")
    for arg in expr.args:
        _check_expr(arg, top_kind, False, live)


def _validate(op: LogicalOperator, outer: frozenset[int] | None, seen: set[int]) -> set[int]:
    kind = op.kind
    expected = 0 if kind in SOURCES else 2 if kind is OpKind.JOIN else 1
    if len(op.inputs) != expected:
        raise PlanInvalid(f"{kind.value} has {len(op.inputs)} inputs, expected {expected}")
    if kind is OpKind.NESTED_TUPLE_SOURCE and outer is None:
        raise PlanInvalid("NESTED-TUPLE-SOURCE outside a nested plan")
    if kind is OpKind.DISTRIBUTE_RESULT and outer is not None:
        raise PlanInvalid("DISTRIBUTE-RESULT inside a nested plan")
    if (kind is OpKind.SUBPLAN) != bool(op.nested):
        raise PlanInvalid(f"{kind.value} nested plan mismatch")
    for v in op.variables:
        if v in seen:
            raise PlanInvalid(f"$${v} produced twice")
        seen.add(v)

    if kind is OpKind.JOIN:
        live = _validate(op.inputs[0], outer, seen) | _validate(op.inputs[1], outer, seen)
    elif op.inputs:
        live = _validate(op.input, outer, seen)
    else:
        live = set(outer or ())

    top_kind = expression_kind(op)
    for e in op.expressions:
        if top_kind is ExprKind.AGGREGATE:
            if not (isinstance(e, Call) and e.name in AGGREGATE_FUNCTIONS):
                raise PlanInvalid("AGGREGATE needs an aggregate function")
        if kind is OpKind.UNNEST and not (isinstance(e, Call) and e.name in UNNESTING_FUNCTIONS):
            raise PlanInvalid("UNNEST needs an unnesting function")
        _check_expr(e, top_kind, True, live)

    if kind is OpKind.SUBPLAN:
        for n in op.nested:
            if n.kind is not OpKind.AGGREGATE:
                raise PlanInvalid("nested plan root must be AGGREGATE")
            live |= _validate(n, frozenset(live), seen)
        return live
    if kind is OpKind.AGGREGATE:
        return set(op.variables)
    return live | set(op.variables)


def validate_plan(plan: LogicalPlan | LogicalOperator) -> None:
    """Raise PlanInvalid naming the first violated structural invariant."""
    root = plan.root if isinstance(plan, LogicalPlan) else plan
    if root.kind is not OpKind.DISTRIBUTE_RESULT:
        raise PlanInvalid("plan root must be DISTRIBUTE-RESULT")
    _validate(root, None, set())
