"""
Order and duplicate analysis — tracks, for every variable at every plan
edge, whether its value is in document order and duplicate free.

Two views are kept per variable: the per-tuple ``value`` and the
``stream`` view, i.e. the concatenation of the variable's values over all
tuples flowing through that edge.  A third flag, ``uniform``, records that
no node in the sequence is an ancestor of another; the child step only
preserves order under it.
"""

from __future__ import annotations

from dataclasses import dataclass

from compiler.algebra import Call, Const, Expr, LogicalOperator, OpKind, Var


@dataclass(frozen=True)
class Props:
    ordered: bool
    distinct: bool
    uniform: bool


ALL = Props(True, True, True)
NONE = Props(False, False, False)


@dataclass(frozen=True)
class OrderingProperty:
    document_ordered: bool
    duplicate_free: bool


@dataclass(frozen=True)
class VarProps:
    value: Props
    stream: Props


@dataclass(frozen=True)
class EdgeState:
    variables: dict
    single: bool  # at most one tuple on this edge
    order: Props  # tuple-stream order along the most recent binding

    def lookup(self, var: int, view: str) -> Props:
        entry = self.variables.get(var)
        if entry is None:
            return NONE
        return entry.value if view == "value" else entry.stream


_POINTWISE = {"child", "attribute", "treat"}


def _step(p: Props) -> Props:
    return Props(p.ordered and p.uniform and p.distinct, p.distinct, p.uniform)


def expr_props(expr: Expr, state: EdgeState, view: str) -> Props:
    """
    Properties of ``expr`` evaluated per tuple (``view="value"``) or
    concatenated over the stream (``view="stream"``; only pointwise
    functions keep anything there).
    """
    if isinstance(expr, Var):
        return state.lookup(expr.id, view)
    if isinstance(expr, Const):
        return ALL
    if not isinstance(expr, Call):
        return NONE
    name = expr.name
    if view == "stream" and name not in _POINTWISE:
        return NONE
    if name in ("child", "attribute"):
        return _step(expr_props(expr.args[0], state, view))
    if name == "treat":
        return expr_props(expr.args[0], state, view)
    if name in ("doc", "collection"):
        return ALL
    inner = expr_props(expr.args[0], state, view) if expr.args else NONE
    if name == "sort-distinct-nodes-asc-or-atomics":
        return Props(True, True, inner.uniform)
    if name == "sort-nodes-asc-or-atomics":
        return Props(True, inner.distinct, inner.uniform)
    if name == "distinct-nodes-or-atomics":
        return Props(inner.ordered, True, inner.uniform)
    return NONE


class OrderingAnalysis:
    """Bottom-up pass recording the edge state below and above every operator."""

    def __init__(self, root: LogicalOperator) -> None:
        self.below: dict[int, tuple[EdgeState, ...]] = {}
        self.above: dict[int, EdgeState] = {}
        self._visit(root, EdgeState({}, True, ALL))

    def _visit(self, op: LogicalOperator, outer: EdgeState) -> EdgeState:
        kind = op.kind
        if kind is OpKind.EMPTY_TUPLE_SOURCE:
            out = EdgeState({}, True, ALL)
        elif kind is OpKind.NESTED_TUPLE_SOURCE:
            outer_vars = {v: VarProps(p.value, p.value) for v, p in outer.variables.items()}
            out = EdgeState(outer_vars, True, ALL)
        elif kind is OpKind.JOIN:
            left = self._visit(op.inputs[0], outer)
            right = self._visit(op.inputs[1], outer)
            self.below[id(op)] = (left, right)
            merged = {v: VarProps(p.value, NONE) for v, p in {**left.variables, **right.variables}.items()}
            out = EdgeState(merged, False, NONE)
        else:
            below = self._visit(op.input, outer)
            self.below[id(op)] = (below,)
            out = self._transfer(op, below)
        self.above[id(op)] = out
        return out

    def _transfer(self, op: LogicalOperator, below: EdgeState) -> EdgeState:
        kind = op.kind
        variables = dict(below.variables)
        if kind is OpKind.ASSIGN:
            for var, expr in zip(op.variables, op.expressions):
                value = expr_props(expr, below, "value")
                stream = value if below.single else expr_props(expr, below, "stream")
                variables[var] = VarProps(value, stream)
            return EdgeState(variables, below.single, below.order)
        if kind is OpKind.UNNEST:
            var, expr = op.variables[0], op.expressions[0]
            if isinstance(expr, Call) and expr.name == "iterate":
                stream = expr_props(expr.args[0], below, "stream")
            else:
                stream = expr_props(expr, below, "stream")
            demoted = {v: VarProps(p.value, NONE) for v, p in variables.items()}
            demoted[var] = VarProps(ALL, stream)
            return EdgeState(demoted, False, stream)
        if kind is OpKind.DATASCAN:
            stream = ALL if below.single else NONE
            demoted = {v: VarProps(p.value, NONE) for v, p in variables.items()}
            demoted[op.variables[0]] = VarProps(ALL, stream)
            return EdgeState(demoted, False, stream)
        if kind is OpKind.SUBPLAN:
            for nested in op.nested:
                inner = self._visit(nested, below)
                for v in nested.variables:
                    value = inner.variables[v].value
                    variables[v] = VarProps(value, value if below.single else NONE)
            return EdgeState(variables, below.single, below.order)
        if kind is OpKind.AGGREGATE:
            out = {}
            for var, expr in zip(op.variables, op.expressions):
                if isinstance(expr, Call) and expr.name == "create_sequence":
                    value = expr_props(expr.args[0], below, "stream")
                else:
                    value = ALL
                out[var] = VarProps(value, value)
            return EdgeState(out, True, ALL)
        # SELECT, DISTRIBUTE-RESULT keep everything
        return EdgeState(variables, below.single, below.order)

    def input_state(self, op: LogicalOperator, branch: int = 0) -> EdgeState:
        return self.below[id(op)][branch]

    def output_state(self, op: LogicalOperator) -> EdgeState:
        return self.above[id(op)]


def analyze_ordering(root: LogicalOperator, op: LogicalOperator) -> OrderingProperty:
    """
    Properties on the edge leaving ``op``: for a binding operator, those of
    its variable over the stream; otherwise the stream's own order.
    """
    state = OrderingAnalysis(root).output_state(op)
    if op.variables and op.kind is not OpKind.AGGREGATE:
        p = state.lookup(op.variables[0], "stream")
    elif op.kind is OpKind.AGGREGATE:
        p = state.lookup(op.variables[0], "value")
    else:
        p = state.order
    return OrderingProperty(p.ordered, p.distinct)
