"""
Query compiler — parse, normalize, translate, optimize, select physical
operators.  ``compile_query`` keeps every stage so the CLI and the plan
explorer can show any of them.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

from compiler.algebra import LogicalPlan, print_plan
from compiler.frontend import normalize, parse_query
from compiler.optimizer import OptimizerResult, run_optimizer
from compiler.physical import PhysicalPlan, print_physical, select_physical
from compiler.rewrite import RuleContext, Stage
from compiler.translator import translate
from settings import RunConfig
from xml_ingest import Catalog

log = logging.getLogger(__name__)

PLAN_STAGES = ("initial", "logical", "physical")


@dataclass(frozen=True)
class CompiledQuery:
    text: str
    core: object
    initial: LogicalPlan
    optimized: OptimizerResult
    physical: PhysicalPlan

    @property
    def logical(self) -> LogicalPlan:
        return self.optimized.stages.get(Stage.LOGICAL, self.optimized.plan)

    def dump(self, stage: str) -> str:
        if stage == "initial":
            return print_plan(self.initial)
        if stage == "logical":
            return print_plan(self.logical)
        if stage == "physical":
            return print_physical(self.physical)
        raise ValueError(f"unknown plan stage {stage!r}; expected one of {', '.join(PLAN_STAGES)}")

    @property
    def plan_hash(self) -> str:
        """Short digest of the final logical plan, reported by the bench."""
        text = print_plan(self.optimized.plan)
        return hashlib.blake2b(text.encode("utf-8"), digest_size=6).hexdigest()


def compile_query(text: str, catalog: Catalog, pushdown: bool = True, config: RunConfig | None = None) -> CompiledQuery:
    core = normalize(parse_query(text))
    initial = translate(core)
    optimized = run_optimizer(initial, ctx=RuleContext(pushdown=pushdown))
    physical = select_physical(optimized.plan, catalog, config)
    log.info("compiled query: %d rewrites, %d physical operators",
             optimized.steps, len(physical.operators()))
    return CompiledQuery(text, core, initial, optimized, physical)
