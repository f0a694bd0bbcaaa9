"""
Parallel rules — turn collection access into partitioned DATASCANs, push
child steps into the scan, let XQuery aggregates run inside AGGREGATE,
and mark those aggregates for local/global evaluation.
"""

from __future__ import annotations

from dataclasses import replace

from compiler.algebra import (
    Call,
    Const,
    LogicalOperator,
    OpKind,
    SEQUENCE_AGGREGATES,
    Var,
    aggregate,
    datascan,
    datascan_collection,
    rewrite_first,
    subplan,
    var_uses,
    walk,
)
from compiler.rewrite import (
    RewriteRule,
    as_function,
    is_call,
    iterate_var,
    single_binding,
    strip_treat,
)
from xdm import AtomicType

# (local, global) function per XQuery aggregate
TWO_STEP_PAIRS = {
    "count": ("count", "sum"),
    "sum": ("sum", "sum"),
    "min": ("min", "min"),
    "max": ("max", "max"),
    "avg": ("avg-local", "avg-global"),
}


def collection_name(expr) -> str | None:
    """The constant URI of ``collection("…")`` or ``collection(promote(data("…"), string))``."""
    if not is_call(expr, "collection"):
        return None
    arg = expr.args[0]
    if is_call(arg, "promote") and is_call(arg.args[0], "data"):
        arg = arg.args[0].args[0]
    if isinstance(arg, Const) and arg.value.kind in (AtomicType.STRING, AtomicType.UNTYPED):
        return arg.value.value
    return None


def child_chain(expr) -> tuple[int, tuple[str, ...]] | None:
    """``child(treat(child(treat($v, …), "a"), …), "b")`` → ($v, ("a", "b"))."""
    names: list[str] = []
    while is_call(expr, "child") and isinstance(expr.args[1], Const):
        names.append(expr.args[1].value.value)
        expr = strip_treat(expr.args[0])
    if names and isinstance(expr, Var):
        return expr.id, tuple(reversed(names))
    return None


class IntroduceDatascanRule(RewriteRule):
    """UNNEST(iterate($c)) over ASSIGN($c: collection("/x")) becomes DATASCAN."""

    name = "introduce_datascan"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            binding = single_binding(op, OpKind.UNNEST)
            if binding is None:
                return None
            c = iterate_var(binding[1])
            lower = single_binding(op.input, OpKind.ASSIGN)
            if c is None or lower is None or lower[0] != c:
                return None
            name = collection_name(lower[1])
            if name is None or var_uses(root, c) != 1:
                return None
            return datascan(name, binding[0], op.input.input)

        return rewrite_first(root, match)


class PushChildIntoDatascanRule(RewriteRule):
    """A child-step UNNEST directly over a DATASCAN extends the scan's path."""

    name = "push_child_into_datascan"

    def apply(self, root, ctx):
        if not ctx.pushdown:
            return None

        def match(op: LogicalOperator):
            binding = single_binding(op, OpKind.UNNEST)
            scan = op.input if op.inputs else None
            if binding is None or scan.kind is not OpKind.DATASCAN:
                return None
            chain = child_chain(binding[1])
            if chain is None or chain[0] != scan.variables[0]:
                return None
            if var_uses(root, scan.variables[0]) != 1:
                return None
            return datascan(datascan_collection(scan), binding[0], scan.input, scan.path + chain[1])

        return rewrite_first(root, match)


class ScalarToAggregateRule(RewriteRule):
    """
    ASSIGN($x: AGG(treat($s, any_type))) over
    SUBPLAN{AGGREGATE($s: create_sequence(E)) …} becomes
    SUBPLAN{AGGREGATE($x: AGG(treat(E, any_type))) …}.
    """

    name = "scalar_to_aggregate"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            binding = single_binding(op, OpKind.ASSIGN)
            if binding is None or op.input.kind is not OpKind.SUBPLAN:
                return None
            x, expr = binding
            if not is_call(expr, *SEQUENCE_AGGREGATES):
                return None
            arg = expr.args[0]
            if not (is_call(arg, "treat") and isinstance(arg.args[0], Var)):
                return None
            s = arg.args[0].id
            sub = op.input
            agg = sub.nested[0]
            agg_binding = single_binding(agg, OpKind.AGGREGATE)
            if agg_binding is None or agg_binding[0] != s or not is_call(agg_binding[1], "create_sequence"):
                return None
            if var_uses(root, s) != 1:
                return None
            body = agg_binding[1].args[0]
            incremental = Call(expr.name, (Call("treat", (body, arg.args[1])),))
            return subplan(aggregate(x, incremental, agg.input), sub.input)

        return rewrite_first(root, match)


class TwoStepAggregateRule(RewriteRule):
    """Annotate an AGGREGATE over scanned data with its local/global functions."""

    name = "two_step_aggregate"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            if op.kind is not OpKind.AGGREGATE or op.two_step:
                return None
            names = [e.name for e in op.expressions if isinstance(e, Call)]
            if len(names) != len(op.expressions) or not all(n in TWO_STEP_PAIRS for n in names):
                return None
            if not any(inner.kind is OpKind.DATASCAN for inner in walk(op.input)):
                return None
            return replace(op, two_step=tuple(TWO_STEP_PAIRS[n] for n in names))

        return rewrite_first(root, match)


rule_introduce_datascan = as_function(IntroduceDatascanRule())
rule_push_child_into_datascan = as_function(PushChildIntoDatascanRule())
rule_scalar_to_aggregate = as_function(ScalarToAggregateRule())
rule_two_step_aggregate = as_function(TwoStepAggregateRule())
