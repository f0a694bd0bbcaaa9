"""
Translator — builds the initial logical plan from the core AST.

The construction is deliberately naive: every path step becomes a
SUBPLAN with an inner focus followed by a sort, every aggregate runs over
a materialized sequence.  Cleaning that up is the optimizer's job.
"""

from __future__ import annotations

import itertools
import logging

from compiler import frontend as fe
from compiler.algebra import (
    FUNCTION_ARITY,
    Call,
    Const,
    Expr,
    LogicalOperator,
    LogicalPlan,
    TypeRef,
    Var,
    aggregate,
    assign,
    call,
    distribute_result,
    ets,
    nts,
    select,
    subplan,
    unnest,
)
from errors import BindError, TranslationError

log = logging.getLogger(__name__)

SORT_FUNCTIONS = frozenset({
    "sort-distinct-nodes-asc-or-atomics", "sort-nodes-asc-or-atomics", "distinct-nodes-or-atomics",
})
# calls that always get an ASSIGN of their own
OWN_ASSIGN = SORT_FUNCTIONS | {"doc", "collection"} | fe.AGGREGATE_FUNCTIONS
COMPARISONS = frozenset(f"{kind}-{op}" for kind in ("value", "general") for op in fe.VALUE_OPS)

Env = dict  # XQuery variable name → $$ id


class Translator:
    def __init__(self) -> None:
        self._ids = itertools.count(1)

    def new_var(self) -> int:
        return next(self._ids)

    # ── expressions ──

    def expr(self, e, op: LogicalOperator, env: Env) -> tuple[LogicalOperator, Expr]:
        """Translate ``e`` on top of ``op``; returns the extended dataflow and the value expression."""
        if isinstance(e, fe.Literal):
            return op, Const(e.value)
        if isinstance(e, fe.TypeName):
            return op, TypeRef(e.name)
        if isinstance(e, fe.VarRef):
            if e.name not in env:
                raise BindError(e.name)
            return op, Var(env[e.name])
        if isinstance(e, fe.FunctionCall):
            return self.function(e, op, env)
        if isinstance(e, fe.SequenceExpr):
            args = []
            for item in e.items:
                op, value = self.expr(item, op, env)
                args.append(value)
            return op, Call("concatenate", tuple(args))
        if isinstance(e, fe.Iterate):
            return self.iterate(e, op, env)
        if isinstance(e, fe.FLWOR):
            return self.nested_flwor(e, op, env)
        if isinstance(e, fe.Quantified):
            return self.quantified(e, op, env)
        raise TranslationError(f"{type(e).__name__} is not part of the core language")

    def bind(self, value: Expr, op: LogicalOperator) -> tuple[LogicalOperator, Var]:
        if isinstance(value, Var):
            return op, value
        var = self.new_var()
        return assign(var, value, op), Var(var)

    def function(self, e: fe.FunctionCall, op: LogicalOperator, env: Env) -> tuple[LogicalOperator, Expr]:
        if e.name not in FUNCTION_ARITY:
            raise TranslationError(f"function {e.name}() has no algebra counterpart")
        args = []
        for arg in e.args:
            op, value = self.expr(arg, op, env)
            if e.name in COMPARISONS and not isinstance(value, (Const, Var)):
                op, value = self.bind(value, op)
            args.append(value)
        value = Call(e.name, tuple(args))
        if e.name in OWN_ASSIGN:
            var = self.new_var()
            return assign(var, value, op), Var(var)
        return op, value

    def iterate(self, e: fe.Iterate, op: LogicalOperator, env: Env) -> tuple[LogicalOperator, Expr]:
        op, source = self.expr(e.input, op, env)
        item = self.new_var()
        inner = unnest(item, call("iterate", source), nts())
        inner, body = self.expr(e.body, inner, {**env, e.var: item})
        result = self.new_var()
        return subplan(aggregate(result, call("create_sequence", body), inner), op), Var(result)

    def nested_flwor(self, e: fe.FLWOR, op: LogicalOperator, env: Env) -> tuple[LogicalOperator, Expr]:
        inner, inner_env = self.clauses(e, nts(), env)
        inner, body = self.expr(e.result, inner, inner_env)
        result = self.new_var()
        return subplan(aggregate(result, call("create_sequence", body), inner), op), Var(result)

    def quantified(self, e: fe.Quantified, op: LogicalOperator, env: Env) -> tuple[LogicalOperator, Expr]:
        inner: LogicalOperator = nts()
        inner_env = dict(env)
        for name, source_expr in e.bindings:
            inner, source = self.expr(source_expr, inner, inner_env)
            var = self.new_var()
            inner = unnest(var, call("iterate", source), inner)
            inner_env[name] = var
        inner, cond = self.expr(e.condition, inner, inner_env)
        result = self.new_var()
        if e.quantifier == "some":
            body = aggregate(result, call("non-empty-stream"), select(cond, inner))
        else:
            body = aggregate(result, call("empty-stream"), select(call("not", cond), inner))
        return subplan(body, op), Var(result)

    # ── FLWOR clauses ──

    def clauses(self, e: fe.FLWOR, op: LogicalOperator, env: Env) -> tuple[LogicalOperator, Env]:
        env = dict(env)
        for clause in e.clauses:
            op, value = self.expr(clause.expr, op, env)
            if isinstance(clause, fe.ForClause):
                var = self.new_var()
                op = unnest(var, call("iterate", value), op)
                env[clause.var] = var
            else:
                op, bound = self.bind(value, op)
                env[clause.var] = bound.id
        if e.where is not None:
            for conjunct in conjuncts(e.where):
                op, cond = self.expr(conjunct, op, env)
                op = select(cond, op)
        return op, env

    def query(self, core) -> LogicalPlan:
        if isinstance(core, fe.FLWOR):
            op, env = self.clauses(core, ets(), {})
            op, value = self.expr(core.result, op, env)
        else:
            op, value = self.expr(core, ets(), {})
            op, value = self.bind(value, op)
        out = self.new_var()
        op = unnest(out, call("iterate", value), op)
        return LogicalPlan(distribute_result(out, op))


def _is_call(e, name: str) -> bool:
    return isinstance(e, fe.FunctionCall) and e.name == name


def conjuncts(where) -> list:
    """``boolean(and(boolean(a), boolean(b)))`` → [boolean(a), boolean(b)]."""
    if _is_call(where, "boolean") and _is_call(where.args[0], "and"):
        where = where.args[0]
    if _is_call(where, "and"):
        out = []
        for arg in where.args:
            out.extend(conjuncts(arg))
        return out
    return [where]


def translate(core) -> LogicalPlan:
    """Initial plan for a normalized query."""
    plan = Translator().query(core)
    log.debug("translated plan with result $$%s", plan.result_variable)
    return plan
