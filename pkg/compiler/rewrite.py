"""
Rewrite-rule base — every rule matches one locus per call and returns the
rewritten plan root, or None when it does not apply anywhere.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from compiler.algebra import (
    Call,
    Expr,
    LogicalOperator,
    LogicalPlan,
    OpKind,
    PlanInvalid,
    Var,
    validate_plan,
    walk,
)
from errors import RuleError

log = logging.getLogger(__name__)


class Stage(str, Enum):
    LOGICAL = "logical"
    LOGICAL_TO_PHYSICAL = "logical-to-physical"
    PHYSICAL = "physical"


@dataclass(frozen=True)
class RuleContext:
    pushdown: bool = True


class RewriteRule(ABC):
    name: str = ""
    stage: Stage = Stage.LOGICAL

    @abstractmethod
    def apply(self, root: LogicalOperator, ctx: RuleContext) -> LogicalOperator | None:
        """Rewrite the first matching locus; None when nothing matches."""

    def __repr__(self) -> str:
        return f"<rule {self.name}>"


def apply_to_fixpoint(
    rule: RewriteRule,
    plan: LogicalPlan,
    ctx: RuleContext | None = None,
    max_steps: int = 1000,
) -> LogicalPlan:
    """Run one rule until it stops matching; the plan is validated after each step."""
    ctx = ctx or RuleContext()
    root = plan.root
    for step in range(max_steps):
        new = rule.apply(root, ctx)
        if new is None:
            return LogicalPlan(root)
        check(rule, new)
        log.debug("rule %s applied (step %d)", rule.name, step + 1)
        root = new
    raise RuleError(rule.name, f"no fixpoint after {max_steps} applications")


def check(rule: RewriteRule, root: LogicalOperator) -> None:
    try:
        validate_plan(root)
    except PlanInvalid as exc:
        raise RuleError(rule.name, str(exc)) from exc


# ── Shared matching helpers ──────────────────────────────────────────

def is_call(expr: Expr, *names: str) -> bool:
    return isinstance(expr, Call) and expr.name in names


def single_binding(op: LogicalOperator, kind: OpKind) -> tuple[int, Expr] | None:
    if op.kind is kind and len(op.variables) == 1 and len(op.expressions) == 1:
        return op.variables[0], op.expressions[0]
    return None


def producer(root: LogicalOperator, var: int) -> LogicalOperator | None:
    for op in walk(root):
        if var in op.variables:
            return op
    return None


def strip_treat(expr: Expr) -> Expr:
    while is_call(expr, "treat"):
        expr = expr.args[0]
    return expr


def iterate_var(expr: Expr) -> int | None:
    """``$v`` when ``expr`` is ``iterate($v)``."""
    if is_call(expr, "iterate") and isinstance(expr.args[0], Var):
        return expr.args[0].id
    return None


def as_function(rule: RewriteRule) -> Callable[..., LogicalPlan]:
    """Plan-to-plan function running ``rule`` to its fixpoint."""

    def run(plan: LogicalPlan, ctx: RuleContext | None = None) -> LogicalPlan:
        return apply_to_fixpoint(rule, plan, ctx)

    run.__name__ = f"rule_{rule.name}"
    run.__doc__ = rule.__doc__
    return run
