"""
Optimizer — runs the rewrite rules stage by stage, each rule to its
fixpoint, the whole stage repeated until no rule fires.  Every single
application is validated and recorded in the trace, which is what the
plan explorer and the snapshot tests read.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field

from compiler.algebra import LogicalOperator, LogicalPlan
from compiler.join_rules import (
    BridgeJoinConditionRule,
    IntroduceCrossProductRule,
    MergeSelectIntoJoinRule,
    PushIntoJoinBranchRule,
)
from compiler.parallel_rules import (
    IntroduceDatascanRule,
    PushChildIntoDatascanRule,
    ScalarToAggregateRule,
    TwoStepAggregateRule,
)
from compiler.path_rules import (
    CombineUnnestRule,
    InlineAssignRule,
    InlineSingletonSubplanRule,
    RemoveRedundantTreatRule,
    RemoveSortRule,
    RemoveSubplanRule,
    RemoveUnusedVariablesRule,
    ScalarToUnnestRule,
)
from compiler.rewrite import RewriteRule, RuleContext, Stage, check
from errors import RuleError

log = logging.getLogger(__name__)

STEP_CEILING = 10_000

RULESET: list[RewriteRule] = [
    RemoveSortRule(),
    RemoveSubplanRule(),
    InlineSingletonSubplanRule(),
    ScalarToUnnestRule(),
    CombineUnnestRule(),
    IntroduceDatascanRule(),
    PushChildIntoDatascanRule(),
    ScalarToAggregateRule(),
    InlineAssignRule(),
    RemoveRedundantTreatRule(),
    IntroduceCrossProductRule(),
    PushIntoJoinBranchRule(),
    MergeSelectIntoJoinRule(),
    TwoStepAggregateRule(),
    RemoveUnusedVariablesRule(),
    BridgeJoinConditionRule(),
]

STAGE_ORDER = (Stage.LOGICAL, Stage.LOGICAL_TO_PHYSICAL, Stage.PHYSICAL)


@dataclass
class TraceEntry:
    stage: Stage
    rule: str
    root: LogicalOperator


@dataclass
class OptimizerResult:
    plan: LogicalPlan
    stages: dict[Stage, LogicalPlan] = field(default_factory=dict)
    trace: list[TraceEntry] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.trace)

    def fired(self) -> Counter:
        return Counter(entry.rule for entry in self.trace)

    def after(self, rule: str, occurrence: int = 1) -> LogicalPlan:
        """Plan right after the ``occurrence``-th application of ``rule``."""
        seen = 0
        for entry in self.trace:
            if entry.rule == rule:
                seen += 1
                if seen == occurrence:
                    return LogicalPlan(entry.root)
        raise KeyError(f"rule {rule} fired {seen} time(s), wanted occurrence {occurrence}")

    def last_after(self, rule: str) -> LogicalPlan:
        for entry in reversed(self.trace):
            if entry.rule == rule:
                return LogicalPlan(entry.root)
        raise KeyError(f"rule {rule} never fired")


def run_optimizer(
    plan: LogicalPlan,
    ruleset: list[RewriteRule] | None = None,
    stages: tuple[Stage, ...] = STAGE_ORDER,
    ctx: RuleContext | None = None,
    max_steps: int = STEP_CEILING,
) -> OptimizerResult:
    """
    Apply ``ruleset`` stage by stage.  Within a stage each rule runs to
    its fixpoint in list order and the list is repeated until a full
    pass changes nothing.  Raises RuleError when a rewrite breaks a plan
    invariant or the step ceiling is hit.
    """
    ruleset = RULESET if ruleset is None else ruleset
    ctx = ctx or RuleContext()
    result = OptimizerResult(plan)
    root = plan.root
    for stage in stages:
        rules = [r for r in ruleset if r.stage is stage]
        changed = bool(rules)
        while changed:
            changed = False
            for rule in rules:
                while True:
                    new = rule.apply(root, ctx)
                    if new is None:
                        break
                    check(rule, new)
                    root = new
                    changed = True
                    result.trace.append(TraceEntry(stage, rule.name, root))
                    log.debug("stage %s: %s (step %d)", stage.value, rule.name, len(result.trace))
                    if len(result.trace) >= max_steps:
                        raise RuleError(rule.name, f"step ceiling {max_steps} reached")
        result.stages[stage] = LogicalPlan(root)
    result.plan = LogicalPlan(root)
    fired = result.fired()
    if fired:
        log.info("optimizer: %d rewrites (%s)", result.steps,
                 ", ".join(f"{name}×{n}" for name, n in sorted(fired.items())))
    return result


def optimize(plan: LogicalPlan, pushdown: bool = True) -> LogicalPlan:
    return run_optimizer(plan, ctx=RuleContext(pushdown=pushdown)).plan
