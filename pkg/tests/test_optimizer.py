"""
Optimizer — plan snapshots after each rewrite, fixpoint behaviour and the
pushdown switch.  Snapshots are compared up to variable renaming.
"""

from __future__ import annotations

import pytest

from compiler.algebra import OpKind, LogicalPlan, parse_plan, plan_alpha_equal, print_plan, validate_plan, walk
from compiler.frontend import normalize, parse_query
from compiler.optimizer import RULESET, run_optimizer
from compiler.path_rules import rule_remove_sort
from compiler.rewrite import RuleContext, Stage
from compiler.translator import translate
from conftest import PLAN_DIR, QUERY_DIR
from errors import RuleError

BOOKSTORE = 'doc("books.xml")/bookstore/book'
COLLECTION = 'collection("/books")/bookstore/book'
COUNT = 'count(for $x in collection("/books")/bookstore/book return $x)'
JOIN = (
    'for $r in collection("/ann-books")/bookstore/book '
    'for $s in collection("/joe-books")/bookstore/book '
    'where $r/title eq $s/title return $r'
)


def initial(text: str) -> LogicalPlan:
    return translate(normalize(parse_query(text)))


def optimized(text: str, pushdown: bool = True):
    return run_optimizer(initial(text), ctx=RuleContext(pushdown=pushdown))


def fixture(name: str) -> LogicalPlan:
    return parse_plan((PLAN_DIR / f"{name}.plan").read_text(encoding="utf-8"))


def assert_plan(actual: LogicalPlan, name: str, annotations: bool = True) -> None:
    expected = fixture(name)
    assert plan_alpha_equal(actual, expected, annotations=annotations), (
        f"plan differs from {name}.plan\n--- actual ---\n{print_plan(actual)}"
        f"--- expected ---\n{print_plan(expected)}"
    )


# ── Path rules on doc() ──────────────────────────────────────────────

def test_bookstore_initial_plan():
    assert_plan(initial(BOOKSTORE), "bookstore_initial")


@pytest.mark.parametrize("rule, occurrence, name", [
    ("remove_sort", 2, "bookstore_remove_sort"),
    ("remove_subplan", 1, "bookstore_remove_subplan_1"),
    ("remove_subplan", 2, "bookstore_remove_subplan_2"),
    ("scalar_to_unnest", 2, "bookstore_scalar_to_unnest"),
    ("combine_unnest", 1, "bookstore_combine_unnest"),
])
def test_bookstore_snapshots(rule, occurrence, name):
    assert_plan(optimized(BOOKSTORE).after(rule, occurrence), name)


def test_bookstore_logical_plan_is_the_combined_unnest():
    result = optimized(BOOKSTORE)
    assert_plan(result.stages[Stage.LOGICAL], "bookstore_combine_unnest")
    assert result.fired()["combine_unnest"] == 1


def test_rule_function_form():
    plan = rule_remove_sort(initial(BOOKSTORE))
    assert "sort-distinct" not in print_plan(plan)
    assert_plan(plan, "bookstore_remove_sort")


# ── Collections and data parallelism ─────────────────────────────────

@pytest.mark.parametrize("rule, name", [
    ("combine_unnest", "collection_path_rules"),
    ("introduce_datascan", "collection_datascan"),
    ("push_child_into_datascan", "collection_pushdown"),
])
def test_collection_snapshots(rule, name):
    assert_plan(optimized(COLLECTION).after(rule, 1), name)


def test_pushdown_can_be_disabled():
    result = optimized(COLLECTION, pushdown=False)
    assert result.fired()["push_child_into_datascan"] == 0
    scans = [op for op in walk(result.plan.root) if op.kind is OpKind.DATASCAN]
    assert [op.path for op in scans] == [()]


def test_count_becomes_a_two_step_aggregate():
    result = optimized(COUNT)
    assert_plan(result.last_after("push_child_into_datascan"), "count_before")
    assert_plan(result.after("scalar_to_aggregate", 1), "count_aggregate", annotations=False)
    aggregates = [op for op in walk(result.stages[Stage.LOGICAL].root) if op.kind is OpKind.AGGREGATE]
    assert [op.two_step for op in aggregates] == [(("count", "sum"),)]
    assert "[local=count, global=sum]" in print_plan(result.stages[Stage.LOGICAL])


# ── Joins ────────────────────────────────────────────────────────────

def test_join_snapshots():
    result = optimized(JOIN)
    first = next(i for i, e in enumerate(result.trace) if e.rule == "introduce_cross_product")
    assert first > 0
    assert_plan(LogicalPlan(result.trace[first - 1].root), "join_before")
    assert_plan(result.stages[Stage.LOGICAL], "join_final")


def test_join_condition_is_bridged_before_physical_selection():
    result = optimized(JOIN)
    (join,) = [op for op in walk(result.plan.root) if op.kind is OpKind.JOIN]
    assert join.expressions[0].name == "equal"
    assert result.trace[-1].stage is Stage.LOGICAL_TO_PHYSICAL


# ── Driver behaviour ─────────────────────────────────────────────────

@pytest.mark.parametrize("name", sorted(p.stem for p in QUERY_DIR.glob("*.xq")))
def test_every_step_is_valid_and_the_result_is_a_fixpoint(name):
    text = (QUERY_DIR / f"{name}.xq").read_text(encoding="utf-8")
    result = optimized(text)
    for entry in result.trace:
        validate_plan(entry.root)
    again = run_optimizer(result.plan)
    assert again.steps == 0


def test_optimizer_is_deterministic():
    a, b = optimized(JOIN), optimized(JOIN)
    assert [e.rule for e in a.trace] == [e.rule for e in b.trace]
    assert print_plan(a.plan) == print_plan(b.plan)


def test_trace_lookup_errors():
    result = optimized(BOOKSTORE)
    with pytest.raises(KeyError):
        result.after("remove_sort", 99)
    with pytest.raises(KeyError):
        result.last_after("introduce_cross_product")


def test_ruleset_names_are_unique():
    names = [r.name for r in RULESET]
    assert len(names) == len(set(names))


def test_step_ceiling():
    with pytest.raises(RuleError):
        run_optimizer(initial(BOOKSTORE), max_steps=1)
