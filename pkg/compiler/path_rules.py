"""
Path-expression rules — remove sorts that the data already satisfies,
dissolve SUBPLANs built for path steps, turn scalar child/iterate pairs
into unnesting, and fold consecutive child unnests into one.  Also the
clean-up rules (inline singleton subplans, inline single-use assignments,
redundant treat, unused variables).
"""

from __future__ import annotations

from dataclasses import replace

from compiler.algebra import (
    Call,
    LogicalOperator,
    OpKind,
    SEQUENCE_AGGREGATES,
    Var,
    assign,
    count_nested_sources,
    count_var_reads,
    graft_source,
    replace_operator,
    rewrite_first,
    substitute,
    substitute_everywhere,
    unnest,
    var_uses,
    walk,
)
from compiler.ordering import OrderingAnalysis, expr_props
from compiler.rewrite import (
    RewriteRule,
    as_function,
    is_call,
    iterate_var,
    producer,
    single_binding,
    strip_treat,
)

SORT_DISTINCT = "sort-distinct-nodes-asc-or-atomics"
SORT_ONLY = "sort-nodes-asc-or-atomics"
DISTINCT_ONLY = "distinct-nodes-or-atomics"
SORT_FUNCTIONS = (SORT_DISTINCT, SORT_ONLY, DISTINCT_ONLY)

_REQUIREMENTS = {SORT_DISTINCT: (True, True), SORT_ONLY: (True, False), DISTINCT_ONLY: (False, True)}
_BY_NEED = {(True, True): SORT_DISTINCT, (True, False): SORT_ONLY, (False, True): DISTINCT_ONLY}


class RemoveSortRule(RewriteRule):
    """Weaken or drop a sort/distinct whose input already has the property."""

    name = "remove_sort"

    def apply(self, root, ctx):
        analysis = OrderingAnalysis(root)
        for op in walk(root):
            binding = single_binding(op, OpKind.ASSIGN)
            if binding is None or not is_call(binding[1], *SORT_FUNCTIONS):
                continue
            var, expr = binding
            arg = expr.args[0]
            props = expr_props(arg, analysis.input_state(op), "value")
            wants_order, wants_distinct = _REQUIREMENTS[expr.name]
            need = (wants_order and not props.ordered, wants_distinct and not props.distinct)
            if need == (False, False):
                if isinstance(arg, Var):
                    return substitute_everywhere(replace_operator(root, op, op.input), {var: arg})
                return replace_operator(root, op, assign(var, arg, op.input))
            new_name = _BY_NEED[need]
            if new_name != expr.name:
                return replace_operator(root, op, assign(var, Call(new_name, (arg,)), op.input))
        return None


class RemoveSubplanRule(RewriteRule):
    """
    UNNEST(iterate($s)) over SUBPLAN{AGGREGATE($s: create_sequence(E)) … NTS}
    becomes UNNEST(iterate($s)) over ASSIGN($s: E) over the nested
    operators grafted onto the SUBPLAN's input.
    """

    name = "remove_subplan"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            binding = single_binding(op, OpKind.UNNEST)
            if binding is None or op.input.kind is not OpKind.SUBPLAN:
                return None
            s = iterate_var(binding[1])
            sub = op.input
            if s is None or len(sub.nested) != 1:
                return None
            agg = sub.nested[0]
            agg_binding = single_binding(agg, OpKind.AGGREGATE)
            if agg_binding is None or agg_binding[0] != s or not is_call(agg_binding[1], "create_sequence"):
                return None
            if var_uses(root, s) != 1 or count_nested_sources(agg.input) != 1:
                return None
            body = graft_source(agg.input, sub.input)
            return op.with_input(assign(s, agg_binding[1].args[0], body))

        return rewrite_first(root, match)


class InlineSingletonSubplanRule(RewriteRule):
    """
    A SUBPLAN iterating a variable that holds exactly one item (bound by
    UNNEST or DATASCAN) and collecting a scalar becomes an ASSIGN.
    """

    name = "inline_singleton_subplan"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            if op.kind is not OpKind.SUBPLAN or len(op.nested) != 1:
                return None
            agg = op.nested[0]
            agg_binding = single_binding(agg, OpKind.AGGREGATE)
            if agg_binding is None or not is_call(agg_binding[1], "create_sequence"):
                return None
            inner = single_binding(agg.input, OpKind.UNNEST)
            if inner is None or agg.input.input.kind is not OpKind.NESTED_TUPLE_SOURCE:
                return None
            source = iterate_var(inner[1])
            if source is None:
                return None
            bound_by = producer(root, source)
            if bound_by is None or bound_by.kind not in (OpKind.UNNEST, OpKind.DATASCAN):
                return None
            body = substitute(agg_binding[1].args[0], {inner[0]: Var(source)})
            return assign(agg_binding[0], body, op.input)

        return rewrite_first(root, match)


class ScalarToUnnestRule(RewriteRule):
    """UNNEST(iterate($r)) over ASSIGN($r: child(…)) becomes UNNEST(child(…))."""

    name = "scalar_to_unnest"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            binding = single_binding(op, OpKind.UNNEST)
            if binding is None:
                return None
            r = iterate_var(binding[1])
            lower = single_binding(op.input, OpKind.ASSIGN)
            if r is None or lower is None or lower[0] != r:
                return None
            if not is_call(lower[1], "child", "attribute") or var_uses(root, r) != 1:
                return None
            return unnest(binding[0], lower[1], op.input.input)

        return rewrite_first(root, match)


class CombineUnnestRule(RewriteRule):
    """Two stacked child UNNESTs linked by a single-use variable become one."""

    name = "combine_unnest"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            upper = single_binding(op, OpKind.UNNEST)
            if upper is None or not is_call(upper[1], "child", "attribute"):
                return None
            linked = strip_treat(upper[1].args[0])
            lower = single_binding(op.input, OpKind.UNNEST)
            if lower is None or not isinstance(linked, Var) or linked.id != lower[0]:
                return None
            if not is_call(lower[1], "child") or var_uses(root, lower[0]) != 1:
                return None
            merged = substitute(upper[1], {lower[0]: lower[1]})
            return unnest(upper[0], merged, op.input.input)

        return rewrite_first(root, match)


_NOT_INLINED = frozenset({"doc", "collection", *SEQUENCE_AGGREGATES, *SORT_FUNCTIONS})


def _contains_call(expr, names) -> bool:
    if isinstance(expr, Call):
        return expr.name in names or any(_contains_call(a, names) for a in expr.args)
    return False


class InlineAssignRule(RewriteRule):
    """ASSIGN($a: f($b)) over ASSIGN($b: E), $b read once, becomes ASSIGN($a: f(E))."""

    name = "inline_assign"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            upper = single_binding(op, OpKind.ASSIGN)
            lower = single_binding(op.input, OpKind.ASSIGN) if op.kind is OpKind.ASSIGN else None
            if upper is None or lower is None:
                return None
            b, inner = lower
            if _contains_call(inner, _NOT_INLINED) or var_uses(root, b) != 1:
                return None
            if not count_var_reads(upper[1], b):
                return None
            return assign(upper[0], substitute(upper[1], {b: inner}), op.input.input)

        return rewrite_first(root, match)


class RemoveRedundantTreatRule(RewriteRule):
    """treat($v, element_node) is a no-op when $v comes from a path DATASCAN."""

    name = "remove_redundant_treat"

    def apply(self, root, ctx):
        scanned = {
            op.variables[0] for op in walk(root) if op.kind is OpKind.DATASCAN and op.path
        }
        if not scanned:
            return None

        def strip(expr):
            if (
                is_call(expr, "treat")
                and isinstance(expr.args[0], Var)
                and expr.args[0].id in scanned
                and getattr(expr.args[1], "name", None) == "element_node"
            ):
                return expr.args[0]
            if isinstance(expr, Call):
                return Call(expr.name, tuple(strip(a) for a in expr.args))
            return expr

        def match(op: LogicalOperator):
            new_exprs = tuple(strip(e) for e in op.expressions)
            if new_exprs == op.expressions:
                return None
            return replace(op, expressions=new_exprs)

        return rewrite_first(root, match)


class RemoveUnusedVariablesRule(RewriteRule):
    """Drop an ASSIGN none of whose variables is read anywhere."""

    name = "remove_unused_variables"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            if op.kind is not OpKind.ASSIGN:
                return None
            if any(var_uses(root, v) for v in op.variables):
                return None
            return op.input

        return rewrite_first(root, match)


rule_remove_sort = as_function(RemoveSortRule())
rule_remove_subplan = as_function(RemoveSubplanRule())
rule_scalar_to_unnest = as_function(ScalarToUnnestRule())
rule_combine_unnest = as_function(CombineUnnestRule())
