"""
Query front end — tokenizer, recursive-descent parser, query printer and
the normalizer that turns the surface AST into the core AST the translator
consumes.

Grammar (the whole supported subset):

    Expr        ::= ExprSingle ("," ExprSingle)*
    ExprSingle  ::= FLWOR | Quantified | OrExpr
    FLWOR       ::= (ForClause | LetClause)+ ("where" ExprSingle)? "return" ExprSingle
    ForClause   ::= "for" Var "in" ExprSingle ("," Var "in" ExprSingle)*
    LetClause   ::= "let" Var ":=" ExprSingle ("," Var ":=" ExprSingle)*
    Quantified  ::= ("some" | "every") Var "in" ExprSingle ("," Var "in" ExprSingle)*
                    "satisfies" ExprSingle
    OrExpr      ::= AndExpr ("or" AndExpr)*
    AndExpr     ::= CompExpr ("and" CompExpr)*
    CompExpr    ::= AddExpr (CompOp AddExpr)?
    CompOp      ::= "eq" | "ne" | "lt" | "le" | "gt" | "ge" | "=" | "!=" | "<" | "<=" | ">" | ">="
    AddExpr     ::= MulExpr (("+" | "-") MulExpr)*
    MulExpr     ::= UnaryExpr (("*" | "div") UnaryExpr)*
    UnaryExpr   ::= ("-" | "+")* PathExpr
    PathExpr    ::= Primary ("/" Step)*
    Step        ::= "@" Name | Name
    Primary     ::= String | Integer | Decimal | Double | Var | "(" Expr? ")" | Name "(" Args? ")"
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from decimal import Decimal
from typing import NamedTuple, Union

import xdm
from errors import BindError, LexError, QuerySyntaxError, XQueryTypeError
from xdm import AtomicType, AtomicValue


# ── Tokens ───────────────────────────────────────────────────────────

class Token(NamedTuple):
    kind: str
    value: str
    offset: int


KEYWORDS = {
    "for": "FOR", "let": "LET", "in": "IN", "where": "WHERE", "return": "RETURN",
    "some": "SOME", "every": "EVERY", "satisfies": "SATISFIES",
}

SYMBOLS = {
    ":=": "ASSIGN", "!=": "NE", "<=": "LE", ">=": "GE", "(": "LPAREN", ")": "RPAREN",
    ",": "COMMA", "/": "SLASH", "@": "AT", "=": "EQ", "<": "LT", ">": "GT",
    "+": "PLUS", "-": "MINUS", "*": "STAR",
}

_TOKEN_RE = re.compile(
    r"""
     (?P<ws>\s+)
    |(?P<double>(?:\d+(?:\.\d*)?|\.\d+)[eE][+-]?\d+)
    |(?P<decimal>\d+\.\d*|\.\d+)
    |(?P<int>\d+)
    |(?P<string>"(?:[^"]|"")*"|'(?:[^']|'')*')
    |(?P<var>\$[A-Za-z_][\w.\-]*)
    |(?P<name>[A-Za-z_][\w.\-]*)
    |(?P<sym>:=|!=|<=|>=|[(),/@=<>+\-*])
    """,
    re.VERBOSE,
)

_ENTITIES = {"&lt;": "<", "&gt;": ">", "&amp;": "&", "&quot;": '"', "&apos;": "'"}


def _unquote(text: str) -> str:
    quote = text[0]
    body = text[1:-1].replace(quote * 2, quote)
    return re.sub(r"&(lt|gt|amp|quot|apos);", lambda m: _ENTITIES[m.group(0)], body)


def _skip_comment(text: str, offset: int) -> int:
    depth, i = 0, offset
    while i < len(text):
        if text.startswith("(:", i):
            depth += 1
            i += 2
        elif text.startswith(":)", i):
            depth -= 1
            i += 2
            if depth == 0:
                return i
        else:
            i += 1
    raise LexError("unterminated comment", offset)


def tokenize(text: str) -> list[Token]:
    """Split query text into tokens; the list always ends with an EOF token."""
    tokens: list[Token] = []
    pos = 0
    while pos < len(text):
        if text.startswith("(:", pos):
            pos = _skip_comment(text, pos)
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos] in "\"'":
                raise LexError("unterminated string literal", pos)
            raise LexError(f"illegal character {text[pos]!r}", pos)
        group, value = m.lastgroup, m.group()
        if group == "var":
            tokens.append(Token("VAR", value[1:], pos))
        elif group == "name":
            tokens.append(Token(KEYWORDS.get(value, "NAME"), value, pos))
        elif group == "string":
            tokens.append(Token("STRING", _unquote(value), pos))
        elif group == "int":
            tokens.append(Token("INT", value, pos))
        elif group == "decimal":
            tokens.append(Token("DECIMAL", value, pos))
        elif group == "double":
            tokens.append(Token("DOUBLE", value, pos))
        elif group == "sym":
            tokens.append(Token(SYMBOLS[value], value, pos))
        pos = m.end()
    tokens.append(Token("EOF", "", len(text)))
    return tokens


# ── AST ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Literal:
    value: AtomicValue


@dataclass(frozen=True)
class VarRef:
    name: str


@dataclass(frozen=True)
class TypeName:
    name: str


@dataclass(frozen=True)
class FunctionCall:
    name: str
    args: tuple = ()


@dataclass(frozen=True)
class PathStep:
    input: "Expr"
    axis: str  # "child" | "attribute"
    name: str


@dataclass(frozen=True)
class Comparison:
    op: str  # eq ne lt le gt ge
    general: bool
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Arithmetic:
    op: str  # + - * div
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Expr"


@dataclass(frozen=True)
class Logical:
    op: str  # and | or
    operands: tuple


@dataclass(frozen=True)
class Quantified:
    quantifier: str  # some | every
    bindings: tuple  # ((name, expr), ...)
    condition: "Expr"


@dataclass(frozen=True)
class SequenceExpr:
    items: tuple


@dataclass(frozen=True)
class ForClause:
    var: str
    expr: "Expr"


@dataclass(frozen=True)
class LetClause:
    var: str
    expr: "Expr"


@dataclass(frozen=True)
class FLWOR:
    clauses: tuple
    where: "Expr | None"
    result: "Expr"


@dataclass(frozen=True)
class Iterate:
    """Core-only: evaluate ``body`` once per item of ``input`` bound to ``var``."""

    var: str
    input: "Expr"
    body: "Expr"


Expr = Union[
    Literal, VarRef, TypeName, FunctionCall, PathStep, Comparison, Arithmetic,
    Unary, Logical, Quantified, SequenceExpr, FLWOR, Iterate,
]

GENERAL_OPS = {"EQ": "eq", "NE": "ne", "LT": "lt", "LE": "le", "GT": "gt", "GE": "ge"}
VALUE_OPS = {"eq", "ne", "lt", "le", "gt", "ge"}
GENERAL_SYMBOL = {"eq": "=", "ne": "!=", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}
ARITH_FUNCTION = {"+": "add", "-": "subtract", "*": "multiply", "div": "divide"}

_PRIMARY_START = frozenset({"string literal", "number", "variable", "(", "function call"})


# ── Parser ───────────────────────────────────────────────────────────

class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, ahead: int = 1) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def error(self, message: str, expected: set[str] | frozenset[str]) -> QuerySyntaxError:
        found = self.tok.value or "end of input"
        return QuerySyntaxError(f"{message}, found {found!r}", self.tok.offset, frozenset(expected))

    def expect(self, kind: str, label: str) -> Token:
        if self.tok.kind != kind:
            raise self.error(f"expected {label}", {label})
        return self.advance()

    def at_name(self, value: str) -> bool:
        return self.tok.kind == "NAME" and self.tok.value == value

    def parse(self) -> Expr:
        expr = self.expr()
        if self.tok.kind != "EOF":
            raise self.error("unexpected token", {"end of input", ","})
        return expr

    def expr(self) -> Expr:
        items = [self.expr_single()]
        while self.tok.kind == "COMMA":
            self.advance()
            items.append(self.expr_single())
        return items[0] if len(items) == 1 else SequenceExpr(tuple(items))

    def expr_single(self) -> Expr:
        if self.tok.kind in ("FOR", "LET"):
            return self.flwor()
        if self.tok.kind in ("SOME", "EVERY") and self.peek().kind == "VAR":
            return self.quantified()
        return self.or_expr()

    def flwor(self) -> Expr:
        clauses: list = []
        while self.tok.kind in ("FOR", "LET"):
            is_for = self.advance().kind == "FOR"
            while True:
                var = self.expect("VAR", "variable").value
                if is_for:
                    self.expect("IN", "in")
                    clauses.append(ForClause(var, self.expr_single()))
                else:
                    self.expect("ASSIGN", ":=")
                    clauses.append(LetClause(var, self.expr_single()))
                if self.tok.kind != "COMMA":
                    break
                self.advance()
        where = None
        if self.tok.kind == "WHERE":
            self.advance()
            where = self.expr_single()
        if self.tok.kind != "RETURN":
            raise self.error("expected return", {"for", "let", "where", "return"})
        self.advance()
        return FLWOR(tuple(clauses), where, self.expr_single())

    def quantified(self) -> Expr:
        quantifier = self.advance().value
        bindings = []
        while True:
            var = self.expect("VAR", "variable").value
            self.expect("IN", "in")
            bindings.append((var, self.expr_single()))
            if self.tok.kind != "COMMA":
                break
            self.advance()
        self.expect("SATISFIES", "satisfies")
        return Quantified(quantifier, tuple(bindings), self.expr_single())

    def or_expr(self) -> Expr:
        operands = [self.and_expr()]
        while self.at_name("or"):
            self.advance()
            operands.append(self.and_expr())
        return operands[0] if len(operands) == 1 else Logical("or", tuple(operands))

    def and_expr(self) -> Expr:
        operands = [self.comparison()]
        while self.at_name("and"):
            self.advance()
            operands.append(self.comparison())
        return operands[0] if len(operands) == 1 else Logical("and", tuple(operands))

    def comparison(self) -> Expr:
        left = self.additive()
        if self.tok.kind == "NAME" and self.tok.value in VALUE_OPS:
            op = self.advance().value
            return Comparison(op, False, left, self.additive())
        if self.tok.kind in GENERAL_OPS:
            op = GENERAL_OPS[self.advance().kind]
            return Comparison(op, True, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.multiplicative()
        while self.tok.kind in ("PLUS", "MINUS"):
            op = self.advance().value
            left = Arithmetic(op, left, self.multiplicative())
        return left

    def multiplicative(self) -> Expr:
        left = self.unary()
        while self.tok.kind == "STAR" or self.at_name("div"):
            op = self.advance().value
            left = Arithmetic(op, left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind in ("PLUS", "MINUS"):
            op = self.advance().value
            return Unary(op, self.unary())
        return self.path()

    def path(self) -> Expr:
        expr = self.primary()
        while self.tok.kind == "SLASH":
            self.advance()
            if self.tok.kind == "AT":
                self.advance()
                expr = PathStep(expr, "attribute", self.step_name())
            else:
                expr = PathStep(expr, "child", self.step_name())
        return expr

    def step_name(self) -> str:
        if self.tok.kind == "NAME" or self.tok.kind in KEYWORDS.values():
            return self.advance().value
        raise self.error("expected a step name", {"name", "@"})

    def primary(self) -> Expr:
        tok = self.tok
        if tok.kind == "STRING":
            self.advance()
            return Literal(xdm.string(tok.value))
        if tok.kind == "INT":
            self.advance()
            return Literal(xdm.integer(int(tok.value)))
        if tok.kind == "DECIMAL":
            self.advance()
            return Literal(xdm.decimal(Decimal(tok.value)))
        if tok.kind == "DOUBLE":
            self.advance()
            return Literal(xdm.double(float(tok.value)))
        if tok.kind == "VAR":
            self.advance()
            return VarRef(tok.value)
        if tok.kind == "LPAREN":
            self.advance()
            if self.tok.kind == "RPAREN":
                self.advance()
                return SequenceExpr(())
            inner = self.expr()
            self.expect("RPAREN", ")")
            return inner
        if tok.kind == "NAME" and self.peek().kind == "LPAREN":
            return self.function_call()
        raise self.error("expected an expression", _PRIMARY_START)

    def function_call(self) -> Expr:
        name = self.advance().value
        self.expect("LPAREN", "(")
        args: list[Expr] = []
        if self.tok.kind != "RPAREN":
            args.append(self.expr_single())
            while self.tok.kind == "COMMA":
                self.advance()
                if name in TYPED_FUNCTIONS and len(args) == 1:
                    args.append(TypeName(self.expect("NAME", "type name").value))
                else:
                    args.append(self.expr_single())
        self.expect("RPAREN", ")")
        return FunctionCall(name, tuple(args))


def parse_query(text: str) -> Expr:
    return _Parser(text).parse()


# ── Printer ──────────────────────────────────────────────────────────

def _print_literal(value: AtomicValue) -> str:
    kind = value.kind
    if kind in xdm.STRING_KINDS:
        return '"' + value.value.replace('"', '""').replace("&", "&amp;") + '"'
    if kind is AtomicType.DECIMAL:
        text = xdm.lexical(value)
        return text if "." in text else text + ".0"
    if kind in (AtomicType.DOUBLE, AtomicType.FLOAT):
        text = repr(float(value.value))
        return text if "e" in text else text + "e0"
    if kind is AtomicType.BOOLEAN:
        return "true()" if value.value else "false()"
    return xdm.lexical(value)


def print_query(expr: Expr) -> str:
    """Render an AST as query text that parses back to the same AST."""
    p = print_query
    if isinstance(expr, Literal):
        return _print_literal(expr.value)
    if isinstance(expr, VarRef):
        return f"${expr.name}"
    if isinstance(expr, TypeName):
        return expr.name
    if isinstance(expr, FunctionCall):
        return f"{expr.name}({', '.join(p(a) for a in expr.args)})"
    if isinstance(expr, PathStep):
        base = p(expr.input)
        if not isinstance(expr.input, (VarRef, FunctionCall, PathStep, Literal)):
            base = f"({base})"
        marker = "@" if expr.axis == "attribute" else ""
        return f"{base}/{marker}{expr.name}"
    if isinstance(expr, Comparison):
        op = GENERAL_SYMBOL[expr.op] if expr.general else expr.op
        return f"({p(expr.left)} {op} {p(expr.right)})"
    if isinstance(expr, Arithmetic):
        return f"({p(expr.left)} {expr.op} {p(expr.right)})"
    if isinstance(expr, Unary):
        return f"({expr.op}{p(expr.operand)})"
    if isinstance(expr, Logical):
        return "(" + f" {expr.op} ".join(p(o) for o in expr.operands) + ")"
    if isinstance(expr, Quantified):
        bindings = ", ".join(f"${v} in {p(e)}" for v, e in expr.bindings)
        return f"({expr.quantifier} {bindings} satisfies {p(expr.condition)})"
    if isinstance(expr, SequenceExpr):
        return "(" + ", ".join(p(i) for i in expr.items) + ")"
    if isinstance(expr, FLWOR):
        parts = []
        for clause in expr.clauses:
            if isinstance(clause, ForClause):
                parts.append(f"for ${clause.var} in {p(clause.expr)}")
            else:
                parts.append(f"let ${clause.var} := {p(clause.expr)}")
        if expr.where is not None:
            parts.append(f"where {p(expr.where)}")
        parts.append(f"return {p(expr.result)}")
        return "(" + " ".join(parts) + ")"
    if isinstance(expr, Iterate):
        return f"iterate(${expr.var} in {p(expr.input)}, {p(expr.body)})"
    raise TypeError(f"cannot print {type(expr).__name__}")


# ── Function signatures ──────────────────────────────────────────────

# Argument coercions applied by normalization:
#   "any"        no coercion
#   "ebv"        boolean(arg)
#   "data"       data(arg)
#   "seq"        treat(arg, any_type)
#   "atomic:T"   promote(data(arg), T)
USER_FUNCTIONS: dict[str, tuple[str, ...]] = {
    "doc": ("atomic:string",),
    "collection": ("atomic:string",),
    "data": ("any",),
    "boolean": ("any",),
    "not": ("ebv",),
    "true": (),
    "false": (),
    "count": ("seq",),
    "sum": ("seq",),
    "min": ("seq",),
    "max": ("seq",),
    "avg": ("seq",),
    "exists": ("any",),
    "empty": ("any",),
    "dateTime": ("data",),
    "decimal": ("data",),
    "integer": ("data",),
    "double": ("data",),
    "string": ("data",),
    "year-from-dateTime": ("atomic:dateTime",),
    "month-from-dateTime": ("atomic:dateTime",),
    "day-from-dateTime": ("atomic:dateTime",),
    "upper-case": ("atomic:string",),
    "lower-case": ("atomic:string",),
    "concat": ("data", "data"),
    "treat": ("any", "type"),
    "promote": ("any", "type"),
}

VARIADIC_FUNCTIONS = {"concat"}
TYPED_FUNCTIONS = {"treat", "promote"}
AGGREGATE_FUNCTIONS = frozenset({"count", "sum", "min", "max", "avg"})

# Functions introduced by normalization; their arguments are already coerced.
CORE_FUNCTIONS = frozenset({
    "sort-distinct-nodes-asc-or-atomics", "sort-nodes-asc-or-atomics", "distinct-nodes-or-atomics",
    "child", "attribute", "and", "or", "negate", "concatenate",
    "add", "subtract", "multiply", "divide",
    *(f"value-{op}" for op in VALUE_OPS),
    *(f"general-{op}" for op in VALUE_OPS),
})


# ── Normalization ────────────────────────────────────────────────────

def _call(name: str, *args: Expr) -> FunctionCall:
    return FunctionCall(name, tuple(args))


def _is_call(expr: Expr, name: str) -> bool:
    return isinstance(expr, FunctionCall) and expr.name == name


def _ebv(expr: Expr) -> Expr:
    return expr if _is_call(expr, "boolean") else _call("boolean", expr)


def _data(expr: Expr, keep_literals: bool = False) -> Expr:
    if _is_call(expr, "data") or (keep_literals and isinstance(expr, Literal)):
        return expr
    return _call("data", expr)


def _coerce(expr: Expr, mode: str) -> Expr:
    if mode in ("any", "type"):
        return expr
    if mode == "ebv":
        return _ebv(expr)
    if mode == "data":
        return _data(expr)
    if mode == "seq":
        return expr if _is_call(expr, "treat") else _call("treat", expr, TypeName("any_type"))
    if mode.startswith("atomic:"):
        if _is_call(expr, "promote"):
            return expr
        return _call("promote", _data(expr), TypeName(mode.split(":", 1)[1]))
    raise ValueError(mode)


class _Normalizer:
    def __init__(self) -> None:
        self.fresh = itertools.count(1)

    def fresh_var(self) -> str:
        return f"#{next(self.fresh)}"

    def run(self, expr: Expr, scope: frozenset[str]) -> Expr:
        n = self.run
        if isinstance(expr, (Literal, TypeName)):
            return expr
        if isinstance(expr, VarRef):
            if expr.name not in scope:
                raise BindError(expr.name)
            return expr
        if isinstance(expr, PathStep):
            var = self.fresh_var()
            step = _call(expr.axis, _call("treat", VarRef(var), TypeName("element_node")),
                         Literal(xdm.string(expr.name)))
            return _call("sort-distinct-nodes-asc-or-atomics", Iterate(var, n(expr.input, scope), step))
        if isinstance(expr, Iterate):
            return Iterate(expr.var, n(expr.input, scope), n(expr.body, scope | {expr.var}))
        if isinstance(expr, Comparison):
            prefix = "general" if expr.general else "value"
            return _call(f"{prefix}-{expr.op}",
                         _data(n(expr.left, scope), True), _data(n(expr.right, scope), True))
        if isinstance(expr, Arithmetic):
            return _call(ARITH_FUNCTION[expr.op],
                         _data(n(expr.left, scope), True), _data(n(expr.right, scope), True))
        if isinstance(expr, Unary):
            operand = _data(n(expr.operand, scope), True)
            return operand if expr.op == "+" else _call("negate", operand)
        if isinstance(expr, Logical):
            return FunctionCall(expr.op, tuple(_ebv(n(o, scope)) for o in expr.operands))
        if isinstance(expr, SequenceExpr):
            return SequenceExpr(tuple(n(i, scope) for i in expr.items))
        if isinstance(expr, Quantified):
            bindings = []
            inner = scope
            for var, e in expr.bindings:
                bindings.append((var, n(e, inner)))
                inner = inner | {var}
            return Quantified(expr.quantifier, tuple(bindings), _ebv(n(expr.condition, inner)))
        if isinstance(expr, FLWOR):
            clauses = []
            inner = scope
            for clause in expr.clauses:
                clauses.append(type(clause)(clause.var, n(clause.expr, inner)))
                inner = inner | {clause.var}
            where = _ebv(n(expr.where, inner)) if expr.where is not None else None
            return FLWOR(tuple(clauses), where, n(expr.result, inner))
        if isinstance(expr, FunctionCall):
            return self.function(expr, scope)
        raise TypeError(f"cannot normalize {type(expr).__name__}")

    def function(self, call: FunctionCall, scope: frozenset[str]) -> Expr:
        args = tuple(self.run(a, scope) for a in call.args)
        if call.name in CORE_FUNCTIONS:
            return FunctionCall(call.name, args)
        signature = USER_FUNCTIONS.get(call.name)
        if signature is None:
            raise XQueryTypeError(f"unknown function {call.name}()", "XPST0017")
        if call.name in VARIADIC_FUNCTIONS:
            if len(args) < len(signature):
                raise XQueryTypeError(f"{call.name}() needs at least {len(signature)} arguments", "XPST0017")
            signature = signature + (signature[-1],) * (len(args) - len(signature))
        elif len(args) != len(signature):
            raise XQueryTypeError(
                f"{call.name}() takes {len(signature)} argument(s), got {len(args)}", "XPST0017"
            )
        if call.name in TYPED_FUNCTIONS and not isinstance(args[1], TypeName):
            raise XQueryTypeError(f"{call.name}() needs a type name as second argument", "XPST0003")
        return FunctionCall(call.name, tuple(_coerce(a, m) for a, m in zip(args, signature)))


def normalize(ast: Expr) -> Expr:
    """
    Make every implicit operation explicit: path steps become
    iterate/child/sort-distinct compositions, condition sites get an EBV
    wrapper, and function arguments gain their data/promote/treat coercions.
    Idempotent.
    """
    return _Normalizer().run(ast, frozenset())
