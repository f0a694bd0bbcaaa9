"""
Join rules — the three generic rewrites that turn a nested pair of
DATASCANs with a connecting SELECT into a JOIN, plus the bridge between
XQuery comparisons and the generic comparison functions the physical
stage recognizes.
"""

from __future__ import annotations

from dataclasses import replace

import xdm
from compiler.algebra import (
    Call,
    Const,
    LogicalOperator,
    LogicalPlan,
    OpKind,
    SOURCES,
    ets,
    free_variables,
    join,
    live_variables,
)
from compiler.rewrite import RewriteRule, Stage, as_function, is_call
from xdm import AtomicType

_TRUE = xdm.boolean(True)

# value comparison → generic comparison used by the physical stage
BRIDGE = {
    "value-eq": "equal",
    "value-ne": "not-equal",
    "value-lt": "less-than",
    "value-le": "less-than-or-equal",
    "value-gt": "greater-than",
    "value-ge": "greater-than-or-equal",
}
UNBRIDGE = {v: k for k, v in BRIDGE.items()}


def is_true(expr) -> bool:
    return isinstance(expr, Const) and expr.value.kind is AtomicType.BOOLEAN and expr.value.value is True


def _rewrite_outer(op: LogicalOperator, fn) -> LogicalOperator | None:
    """Like ``rewrite_first`` but never enters nested plans."""
    replaced = fn(op)
    if replaced is not None:
        return replaced
    for i, child in enumerate(op.inputs):
        new = _rewrite_outer(child, fn)
        if new is not None:
            return replace(op, inputs=op.inputs[:i] + (new,) + op.inputs[i + 1:])
    return None


class IntroduceCrossProductRule(RewriteRule):
    """A DATASCAN fed by another dataflow becomes JOIN(true) of two independent branches."""

    name = "introduce_cross_product"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            if op.kind is not OpKind.DATASCAN or op.input.kind in SOURCES:
                return None
            if free_variables(op):
                return None
            scan = op.with_input(ets())
            return join(Const(_TRUE), scan, op.input)

        return _rewrite_outer(root, match)


class PushIntoJoinBranchRule(RewriteRule):
    """An ASSIGN, SELECT or SUBPLAN right above a JOIN moves into the one branch it reads."""

    name = "push_into_join_branch"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            if op.kind not in (OpKind.ASSIGN, OpKind.SELECT, OpKind.SUBPLAN):
                return None
            below = op.input
            if below.kind is not OpKind.JOIN:
                return None
            needed = free_variables(op)
            for branch in (0, 1):
                if needed <= live_variables(below.inputs[branch]):
                    moved = op.with_input(below.inputs[branch])
                    inputs = list(below.inputs)
                    inputs[branch] = moved
                    return replace(below, inputs=tuple(inputs))
            return None

        return _rewrite_outer(root, match)


class MergeSelectIntoJoinRule(RewriteRule):
    """A SELECT reading both branches becomes (part of) the JOIN condition."""

    name = "merge_select_into_join"

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            if op.kind is not OpKind.SELECT or op.input.kind is not OpKind.JOIN:
                return None
            below = op.input
            cond = op.expressions[0]
            reads = free_variables(op)
            if not (reads & live_variables(below.inputs[0]) and reads & live_variables(below.inputs[1])):
                return None
            current = below.expressions[0]
            if is_true(current):
                merged = cond
            elif is_call(current, "and"):
                merged = Call("and", current.args + (cond,))
            else:
                merged = Call("and", (current, cond))
            return replace(below, expressions=(merged,))

        return _rewrite_outer(root, match)


def bridge(expr):
    """``boolean(value-eq(x, y))`` → ``equal(x, y)``; conjunctions are bridged member-wise."""
    if is_call(expr, "boolean") and isinstance(expr.args[0], Call) and expr.args[0].name in BRIDGE:
        inner = expr.args[0]
        return Call(BRIDGE[inner.name], inner.args)
    if is_call(expr, "and"):
        return Call("and", tuple(bridge(a) for a in expr.args))
    return expr


def unbridge(expr):
    if isinstance(expr, Call) and expr.name in UNBRIDGE:
        return Call("boolean", (Call(UNBRIDGE[expr.name], expr.args),))
    if is_call(expr, "and"):
        return Call("and", tuple(unbridge(a) for a in expr.args))
    return expr


class BridgeJoinConditionRule(RewriteRule):
    """Rewrite JOIN conditions into generic comparisons before physical selection."""

    name = "bridge_join_condition"
    stage = Stage.LOGICAL_TO_PHYSICAL

    def apply(self, root, ctx):
        def match(op: LogicalOperator):
            if op.kind is not OpKind.JOIN:
                return None
            bridged = bridge(op.expressions[0])
            if bridged == op.expressions[0]:
                return None
            return replace(op, expressions=(bridged,))

        return _rewrite_outer(root, match)


rule_introduce_cross_product = as_function(IntroduceCrossProductRule())
rule_push_into_join_branch = as_function(PushIntoJoinBranchRule())
rule_merge_select_into_join = as_function(MergeSelectIntoJoinRule())
rule_bridge_join_condition = as_function(BridgeJoinConditionRule())

_JOIN_RULES = (IntroduceCrossProductRule(), PushIntoJoinBranchRule(), MergeSelectIntoJoinRule())


def rule_introduce_join(plan: LogicalPlan, ctx=None) -> LogicalPlan:
    """Cross product, branch push-down and SELECT merge, repeated until none fires."""
    while True:
        before = plan
        for rule in _JOIN_RULES:
            plan = as_function(rule)(plan, ctx)
        if plan == before:
            return plan
