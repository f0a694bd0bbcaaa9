"""
Logical algebra — plan text format, alpha-equivalence and structural validation.
"""

from __future__ import annotations

import random
from dataclasses import replace

import pytest

import xdm
from compiler.algebra import (
    Call,
    Const,
    OpKind,
    PlanInvalid,
    TypeRef,
    Var,
    aggregate,
    assign,
    call,
    const_string,
    datascan,
    distribute_result,
    ets,
    free_variables,
    join,
    live_variables,
    nts,
    parse_plan,
    plan_alpha_equal,
    print_plan,
    select,
    subplan,
    unnest,
    validate_plan,
)
from compiler.algebra import LogicalOperator, LogicalPlan
from conftest import PLAN_DIR
from errors import PlanSyntaxError

FIXTURES = sorted(PLAN_DIR.glob("*.plan"))


def _doc_plan(a: int, b: int) -> LogicalPlan:
    """ASSIGN a doc, UNNEST its items, return them."""
    return LogicalPlan(distribute_result(b, unnest(
        b, call("iterate", Var(a)),
        assign(a, call("doc", const_string("books.xml")), ets()),
    )))


def _count_plan(two_step=()) -> LogicalPlan:
    agg = aggregate(3, call("count", call("treat", Var(1), TypeRef("any_type"))), nts())
    agg = replace(agg, two_step=two_step, inputs=(datascan("/books", 1, agg.input, ("bookstore", "book")),))
    return LogicalPlan(distribute_result(4, unnest(4, call("iterate", Var(3)), subplan(agg, ets()))))


# ── Fixtures and text format ─────────────────────────────────────────

@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_fixture_plans_are_valid(path):
    plan = parse_plan(path.read_text(encoding="utf-8"))
    validate_plan(plan)


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_print_parse_round_trip(path):
    plan = parse_plan(path.read_text(encoding="utf-8"))
    text = print_plan(plan)
    assert parse_plan(text) == plan
    assert print_plan(parse_plan(text)) == text


# ── Random plans ─────────────────────────────────────────────────────

_CALLS = ("add", "value-eq", "child", "iterate", "treat", "data", "count", "concatenate", "boolean", "and")
_STRINGS = ("", "book", 'say "hi"', "a, b", "/x/y", "día")


def _random_const(rng: random.Random) -> Const:
    roll = rng.randrange(5)
    if roll == 0:
        return Const(xdm.integer(rng.randint(-50, 50)))
    if roll == 1:
        return Const(xdm.decimal(f"{rng.randint(0, 999)}.{rng.randint(0, 99):02d}"))
    if roll == 2:
        return Const(xdm.double(rng.choice([0.5, 2.5, -1.25, 1e-3, 6.02e23])))
    if roll == 3:
        return Const(xdm.boolean(rng.random() < 0.5))
    return const_string(rng.choice(_STRINGS))


def _random_expr(rng: random.Random, depth: int):
    roll = rng.random()
    if depth <= 0 or roll < 0.3:
        leaf = rng.randrange(3)
        if leaf == 0:
            return Var(rng.randint(1, 60))
        if leaf == 1:
            return _random_const(rng)
        return TypeRef(rng.choice(["any_type", "integer", "string"]))
    args = tuple(_random_expr(rng, depth - 1) for _ in range(rng.randint(0, 3)))
    return Call(rng.choice(_CALLS), args)


def _random_chain(rng: random.Random, depth: int, source) -> LogicalOperator:
    op = source()
    for _ in range(rng.randint(0, 4)):
        var = rng.randint(1, 60)
        roll = rng.randrange(7)
        if roll == 0:
            op = assign(var, _random_expr(rng, 3), op)
            if rng.random() < 0.3:
                op = replace(op, variables=(var, var + 1), expressions=(*op.expressions, _random_expr(rng, 2)))
        elif roll == 1:
            op = unnest(var, call("iterate", _random_expr(rng, 2)), op)
        elif roll == 2:
            op = aggregate(var, _random_expr(rng, 2), op)
            if rng.random() < 0.4:
                op = replace(op, two_step=(("count", "sum"),))
        elif roll == 3:
            op = select(_random_expr(rng, 3), op)
        elif roll == 4:
            path = tuple(rng.sample(["bookstore", "book", "data", "station"], rng.randint(0, 2)))
            op = datascan(rng.choice(["/books", "/sensors"]), var, op, path)
        elif roll == 5 and depth > 0:
            op = subplan(_random_chain(rng, depth - 1, nts), op)
        elif depth > 0:
            op = join(
                _random_expr(rng, 2),
                _random_chain(rng, depth - 1, ets),
                _random_chain(rng, depth - 1, ets),
            )
    return op


@pytest.mark.parametrize("seed", range(100))
def test_random_plans_round_trip(seed):
    rng = random.Random(seed)
    plan = LogicalPlan(distribute_result(rng.randint(1, 60), _random_chain(rng, 3, ets)))
    text = print_plan(plan)
    assert parse_plan(text) == plan
    assert print_plan(parse_plan(text)) == text


def test_print_datascan_with_path_and_annotation():
    text = print_plan(_count_plan((("count", "sum"),)))
    assert 'DATASCAN( collection("/books"), $$1, "/bookstore/book" )' in text
    assert "[local=count, global=sum]" in text
    assert text.startswith("DISTRIBUTE-RESULT( $$4 )\n")


def test_constants_keep_their_kind():
    plan = LogicalPlan(distribute_result(1, assign(1, call(
        "add", Const(xdm.integer(5)), call("add", Const(xdm.decimal("491.744")), Const(xdm.double(0.5))),
    ), ets())))
    parsed = parse_plan(print_plan(plan))
    expr = parsed.root.input.expressions[0]
    assert expr.args[0].value.kind is xdm.AtomicType.INTEGER
    assert expr.args[1].args[0].value.kind is xdm.AtomicType.DECIMAL
    assert expr.args[1].args[1].value.kind is xdm.AtomicType.DOUBLE


def test_join_prints_both_branches():
    plan = LogicalPlan(distribute_result(1, join(
        Const(xdm.boolean(True)),
        datascan("/a", 1, ets()),
        datascan("/b", 2, ets()),
    )))
    text = print_plan(plan)
    assert "JOIN( true ) {" in text and "} {" in text
    assert parse_plan(text) == plan


@pytest.mark.parametrize("text", [
    "",
    "NOT-AN-OPERATOR",
    "DISTRIBUTE-RESULT( $$1 \nEMPTY-TUPLE-SOURCE",
    "UNNEST( $$1 iterate($$2) )\nEMPTY-TUPLE-SOURCE",
    "EMPTY-TUPLE-SOURCE\nEMPTY-TUPLE-SOURCE",
])
def test_malformed_plan_text(text):
    with pytest.raises(PlanSyntaxError):
        parse_plan(text)


# ── Alpha-equivalence ────────────────────────────────────────────────

def test_renamed_plans_are_equal():
    assert plan_alpha_equal(_doc_plan(2, 3), _doc_plan(17, 41))


def test_renaming_must_be_bijective():
    def pair(left: int, right: int) -> LogicalPlan:
        return LogicalPlan(distribute_result(1, select(
            call("value-eq", Var(left), Var(right)),
            assign(1, Const(xdm.integer(1)), assign(2, Const(xdm.integer(1)), ets())),
        )))

    assert plan_alpha_equal(pair(1, 2), pair(1, 2))
    assert not plan_alpha_equal(pair(1, 2), pair(1, 1))


def test_constants_and_names_must_match():
    other = LogicalPlan(distribute_result(3, unnest(
        3, call("iterate", Var(2)), assign(2, call("doc", const_string("other.xml")), ets()),
    )))
    assert not plan_alpha_equal(_doc_plan(2, 3), other)


def test_annotations_are_optional_in_comparison():
    plain, annotated = _count_plan(), _count_plan((("count", "sum"),))
    assert not plan_alpha_equal(plain, annotated)
    assert plan_alpha_equal(plain, annotated, annotations=False)


# ── Variables and validation ─────────────────────────────────────────

def test_free_and_live_variables():
    sub = _count_plan().root.input.input
    assert sub.kind is OpKind.SUBPLAN
    assert free_variables(sub) == set()
    assert free_variables(sub.nested[0]) == {1}
    sel = select(call("boolean", Var(9)), nts())
    assert free_variables(sel) == {9}
    assert live_variables(assign(2, Var(1), datascan("/a", 1, ets()))) == {1, 2}


def test_validate_accepts_hand_built_plans():
    validate_plan(_doc_plan(2, 3))
    validate_plan(_count_plan((("count", "sum"),)))


@pytest.mark.parametrize("plan, message", [
    (LogicalPlan(assign(1, Const(xdm.integer(1)), ets())), "DISTRIBUTE-RESULT"),
    (LogicalPlan(distribute_result(1, assign(1, Var(7), ets()))), "not live"),
    (LogicalPlan(distribute_result(1, assign(1, Const(xdm.integer(1)), assign(1, Const(xdm.integer(2)), ets())))),
     "produced twice"),
    (LogicalPlan(distribute_result(1, assign(1, call("count", Var(1)), nts()))), "NESTED-TUPLE-SOURCE"),
    (LogicalPlan(distribute_result(1, assign(1, call("iterate", Const(xdm.integer(1))), ets()))), "iterate"),
    (LogicalPlan(distribute_result(1, unnest(1, call("data", Const(xdm.integer(1))), ets()))), "unnesting"),
    (LogicalPlan(distribute_result(1, assign(1, call("frobnicate"), ets()))), "unknown function"),
    (LogicalPlan(distribute_result(1, assign(1, call("child", Const(xdm.integer(1))), ets()))), "arguments"),
])
def test_validate_rejects(plan, message):
    with pytest.raises(PlanInvalid, match=message):
        validate_plan(plan)


def test_nested_plan_reads_outer_variables():
    nested = aggregate(5, call("create_sequence", call("child", Var(1), const_string("a"))), nts())
    validate_plan(LogicalPlan(distribute_result(5, subplan(nested, datascan("/a", 1, ets())))))
    hidden = aggregate(5, call("create_sequence", Var(6)), nts())
    with pytest.raises(PlanInvalid):
        validate_plan(LogicalPlan(distribute_result(5, subplan(hidden, datascan("/a", 1, ets())))))


def test_call_helpers():
    assert call("iterate", Var(1)) == Call("iterate", (Var(1),))
    assert datascan("/a", 1, ets()).kind is OpKind.DATASCAN
