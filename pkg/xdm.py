"""
XQuery Data Model subset — atomic values, nodes with document-order
identity, flat sequences, atomization, effective boolean value, type
promotion and lexical casting.

Everything here is immutable once built, so values can be handed between
worker partitions without copying or locking.
"""

from __future__ import annotations

import datetime as dt
import math
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Context, Decimal, InvalidOperation
from enum import Enum, IntEnum
from functools import cached_property
from typing import Iterable, NamedTuple, Union

import pytz

from errors import XQueryTypeError


# ── Atomic kinds ─────────────────────────────────────────────────────

class AtomicType(str, Enum):
    BOOLEAN = "boolean"
    BYTE = "byte"
    SHORT = "short"
    INTEGER = "integer"
    LONG = "long"
    DOUBLE = "double"
    FLOAT = "float"
    STRING = "string"
    BINARY = "binary"
    DECIMAL = "decimal"
    DATE = "date"
    DATETIME = "dateTime"
    TIME = "time"
    DURATION = "duration"
    QNAME = "QName"
    UNTYPED = "untypedAtomic"


INTEGER_KINDS = frozenset({AtomicType.BYTE, AtomicType.SHORT, AtomicType.INTEGER, AtomicType.LONG})
NUMERIC_KINDS = INTEGER_KINDS | {AtomicType.DECIMAL, AtomicType.FLOAT, AtomicType.DOUBLE}
STRING_KINDS = frozenset({AtomicType.STRING, AtomicType.UNTYPED})

_INTEGER_RANGES = {
    AtomicType.BYTE: (-(2 ** 7), 2 ** 7 - 1),
    AtomicType.SHORT: (-(2 ** 15), 2 ** 15 - 1),
    AtomicType.LONG: (-(2 ** 63), 2 ** 63 - 1),
}

# Widening ladder used by promotion and by arithmetic result typing.
_NUMERIC_RANK = {
    AtomicType.BYTE: 0,
    AtomicType.SHORT: 1,
    AtomicType.INTEGER: 2,
    AtomicType.LONG: 3,
    AtomicType.DECIMAL: 4,
    AtomicType.FLOAT: 5,
    AtomicType.DOUBLE: 6,
}

# Fixed-point decimals: 18 fractional digits, round-half-even.
DECIMAL_CONTEXT = Context(prec=80, rounding=ROUND_HALF_EVEN)
DECIMAL_QUANTUM = Decimal(1).scaleb(-18)


class Duration(NamedTuple):
    months: int
    seconds: Decimal


@dataclass(frozen=True)
class AtomicValue:
    kind: AtomicType
    value: object

    def __repr__(self) -> str:
        return f"{self.kind.value}({lexical(self)!r})"


def boolean(value: bool) -> AtomicValue:
    return AtomicValue(AtomicType.BOOLEAN, bool(value))


def integer(value: int) -> AtomicValue:
    return AtomicValue(AtomicType.INTEGER, int(value))


def double(value: float) -> AtomicValue:
    return AtomicValue(AtomicType.DOUBLE, float(value))


def decimal(value: Decimal | int | str) -> AtomicValue:
    return AtomicValue(AtomicType.DECIMAL, fix_decimal(Decimal(value)))


def string(value: str) -> AtomicValue:
    return AtomicValue(AtomicType.STRING, value)


def untyped(value: str) -> AtomicValue:
    return AtomicValue(AtomicType.UNTYPED, value)


def fix_decimal(value: Decimal) -> Decimal:
    """Round to the 18-digit fixed-point grid."""
    if not value.is_finite():
        raise XQueryTypeError(f"decimal value {value} is not finite", "FOCA0002")
    return value.quantize(DECIMAL_QUANTUM, context=DECIMAL_CONTEXT)


# ── Nodes and identity ───────────────────────────────────────────────

class NodeId(NamedTuple):
    partition: int
    doc_seq: int
    pre_order: int


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def compare_document_order(a: NodeId, b: NodeId) -> Ordering:
    """Lexicographic on (partition, doc_seq, pre_order)."""
    if a == b:
        return Ordering.EQUAL
    return Ordering.LESS if tuple(a) < tuple(b) else Ordering.GREATER


class NodeKind(str, Enum):
    DOCUMENT = "document"
    ELEMENT = "element"
    ATTRIBUTE = "attribute"
    TEXT = "text"
    COMMENT = "comment"
    PI = "processing-instruction"


@dataclass(frozen=True, eq=False)
class Node:
    """
    An XDM node.  ``value`` holds the content of attribute, text, comment
    and processing-instruction nodes; ``nbytes`` is the serialized size of
    the subtree and drives frame accounting.
    """

    id: NodeId
    kind: NodeKind
    name: str | None = None
    children: tuple["Node", ...] = ()
    attributes: tuple["Node", ...] = ()
    value: str = ""
    nbytes: int = field(default=0, compare=False)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Node) and other.id == self.id

    def __hash__(self) -> int:
        return hash(self.id)

    def __repr__(self) -> str:
        label = self.name or ""
        return f"<{self.kind.value} {label} @{tuple(self.id)}>"

    @cached_property
    def string_value(self) -> str:
        if self.kind in (NodeKind.DOCUMENT, NodeKind.ELEMENT):
            return "".join(_descendant_text(self))
        return self.value

    def element_children(self, name: str | None = None) -> Iterable["Node"]:
        for child in self.children:
            if child.kind is NodeKind.ELEMENT and (name is None or child.name == name):
                yield child

    def attribute(self, name: str) -> "Node | None":
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None


def _descendant_text(node: Node) -> Iterable[str]:
    for child in node.children:
        if child.kind is NodeKind.TEXT:
            yield child.value
        elif child.kind is NodeKind.ELEMENT:
            yield from _descendant_text(child)


Item = Union[Node, AtomicValue]
XDMSequence = tuple  # tuple[Item, ...]; flat by construction
EMPTY: XDMSequence = ()


def sequence(*parts: Item | Iterable[Item]) -> XDMSequence:
    """Concatenate items and sequences into one flat sequence."""
    out: list[Item] = []
    for part in parts:
        if isinstance(part, (Node, AtomicValue)):
            out.append(part)
        else:
            for item in part:
                if isinstance(item, (Node, AtomicValue)):
                    out.append(item)
                else:
                    out.extend(sequence(item))
    return tuple(out)


def is_node(item: Item) -> bool:
    return isinstance(item, Node)


# ── Atomization and EBV ──────────────────────────────────────────────

def atomize_item(item: Item) -> AtomicValue:
    if isinstance(item, AtomicValue):
        return item
    if item.kind in (NodeKind.COMMENT, NodeKind.PI):
        return string(item.string_value)
    return untyped(item.string_value)


def atomize(seq: XDMSequence) -> XDMSequence:
    """Replace every node by its untyped string value; keep atomics."""
    return tuple(atomize_item(item) for item in seq)


def effective_boolean_value(seq: XDMSequence) -> bool:
    if not seq:
        return False
    first = seq[0]
    if isinstance(first, Node):
        return True
    if len(seq) > 1:
        raise XQueryTypeError("effective boolean value of a multi-item atomic sequence", "FORG0006")
    kind, value = first.kind, first.value
    if kind is AtomicType.BOOLEAN:
        return bool(value)
    if kind in STRING_KINDS:
        return value != ""
    if kind in NUMERIC_KINDS:
        if isinstance(value, float) and math.isnan(value):
            return False
        return value != 0
    raise XQueryTypeError(f"no effective boolean value for {kind.value}", "FORG0006")


# ── Lexical forms ────────────────────────────────────────────────────

def format_decimal(value: Decimal) -> str:
    if value == 0:
        return "0"
    text = format(value.normalize(DECIMAL_CONTEXT), "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    return text


def format_double(value: float) -> str:
    if math.isnan(value):
        return "NaN"
    if math.isinf(value):
        return "INF" if value > 0 else "-INF"
    if value == 0:
        return "-0" if math.copysign(1.0, value) < 0 else "0"
    magnitude = abs(value)
    if 1e-6 <= magnitude < 1e6:
        text = repr(value)
        if "e" in text or "E" in text:
            text = format(Decimal(text), "f")
        if text.endswith(".0"):
            text = text[:-2]
        return text
    # shortest round-tripping digits, scientific form
    sign, digits, exp = Decimal(repr(value)).as_tuple()
    text = "".join(map(str, digits)).lstrip("0")
    exponent = len(digits) + exp - 1 - (len(digits) - len("".join(map(str, digits)).lstrip("0")))
    lead, rest = text[0], text[1:].rstrip("0")
    return f"{'-' if sign else ''}{lead}.{rest or '0'}E{exponent}"


def format_datetime(value: dt.datetime) -> str:
    text = value.strftime("%Y-%m-%dT%H:%M:%S")
    millis = value.microsecond // 1000
    if millis:
        text += f".{millis:03d}".rstrip("0")
    return text + "Z"


def format_duration(value: Duration) -> str:
    months, seconds = value.months, value.seconds
    negative = months < 0 or seconds < 0
    months, seconds = abs(months), abs(seconds)
    out = "-P" if negative else "P"
    years, months = divmod(months, 12)
    if years:
        out += f"{years}Y"
    if months:
        out += f"{months}M"
    days, rem = divmod(seconds, 86400)
    hours, rem = divmod(rem, 3600)
    minutes, secs = divmod(rem, 60)
    if days:
        out += f"{int(days)}D"
    if hours or minutes or secs:
        out += "T"
        if hours:
            out += f"{int(hours)}H"
        if minutes:
            out += f"{int(minutes)}M"
        if secs:
            out += f"{format_decimal(Decimal(secs))}S"
    return out if out not in ("P", "-P") else "PT0S"


def lexical(value: AtomicValue) -> str:
    kind, payload = value.kind, value.value
    if kind is AtomicType.BOOLEAN:
        return "true" if payload else "false"
    if kind in INTEGER_KINDS:
        return str(payload)
    if kind is AtomicType.DECIMAL:
        return format_decimal(payload)
    if kind in (AtomicType.DOUBLE, AtomicType.FLOAT):
        return format_double(payload)
    if kind is AtomicType.DATETIME:
        return format_datetime(payload)
    if kind is AtomicType.DATE:
        return payload.isoformat()
    if kind is AtomicType.TIME:
        return payload.isoformat()
    if kind is AtomicType.DURATION:
        return format_duration(payload)
    if kind is AtomicType.BINARY:
        return payload.hex().upper()
    return str(payload)


# ── Lexical parsing ──────────────────────────────────────────────────

_DATETIME_RE = re.compile(
    r"^(-?\d{4,})-(\d{2})-(\d{2})T(\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?(Z|[+-]\d{2}:\d{2})?$"
)
_DATE_RE = re.compile(r"^(-?\d{4,})-(\d{2})-(\d{2})(Z|[+-]\d{2}:\d{2})?$")
_TIME_RE = re.compile(r"^(\d{2}):(\d{2}):(\d{2})(?:\.(\d+))?(Z|[+-]\d{2}:\d{2})?$")
_DURATION_RE = re.compile(
    r"^(-)?P(?:(\d+)Y)?(?:(\d+)M)?(?:(\d+)D)?(?:T(?:(\d+)H)?(?:(\d+)M)?(?:(\d+(?:\.\d+)?)S)?)?$"
)
_INTEGER_RE = re.compile(r"^[+-]?\d+$")
_DECIMAL_RE = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)$")
_DOUBLE_RE = re.compile(r"^([+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?|[+-]?INF|NaN)$")


def _tz_offset(text: str | None) -> dt.tzinfo:
    if text is None or text == "Z":
        return pytz.utc
    sign = -1 if text[0] == "-" else 1
    hours, minutes = int(text[1:3]), int(text[4:6])
    return pytz.FixedOffset(sign * (hours * 60 + minutes))


def parse_datetime(text: str) -> dt.datetime:
    """ISO-8601 dateTime, millisecond precision, normalized to UTC."""
    m = _DATETIME_RE.match(text.strip())
    if m is None:
        raise XQueryTypeError(f"invalid dateTime {text!r}", "FORG0001")
    year, month, day, hour, minute, second = (int(g) for g in m.groups()[:6])
    millis = int((m.group(7) or "0")[:3].ljust(3, "0"))
    tz = _tz_offset(m.group(8))
    try:
        if hour == 24 and minute == 0 and second == 0:
            naive = dt.datetime(year, month, day) + dt.timedelta(days=1)
        else:
            naive = dt.datetime(year, month, day, hour, minute, second, millis * 1000)
    except ValueError as exc:
        raise XQueryTypeError(f"invalid dateTime {text!r}: {exc}", "FORG0001") from exc
    if tz is pytz.utc:
        return pytz.utc.localize(naive)
    return tz.localize(naive).astimezone(pytz.utc)


def parse_date(text: str) -> dt.date:
    m = _DATE_RE.match(text.strip())
    if m is None:
        raise XQueryTypeError(f"invalid date {text!r}", "FORG0001")
    try:
        return dt.date(int(m.group(1)), int(m.group(2)), int(m.group(3)))
    except ValueError as exc:
        raise XQueryTypeError(f"invalid date {text!r}: {exc}", "FORG0001") from exc


def parse_time(text: str) -> dt.time:
    m = _TIME_RE.match(text.strip())
    if m is None:
        raise XQueryTypeError(f"invalid time {text!r}", "FORG0001")
    millis = int((m.group(4) or "0")[:3].ljust(3, "0"))
    try:
        return dt.time(int(m.group(1)), int(m.group(2)), int(m.group(3)), millis * 1000)
    except ValueError as exc:
        raise XQueryTypeError(f"invalid time {text!r}: {exc}", "FORG0001") from exc


def parse_duration(text: str) -> Duration:
    m = _DURATION_RE.match(text.strip())
    if m is None or text.strip() in ("P", "-P") or text.strip().endswith("T"):
        raise XQueryTypeError(f"invalid duration {text!r}", "FORG0001")
    neg, years, months, days, hours, minutes, secs = m.groups()
    total_months = int(years or 0) * 12 + int(months or 0)
    total_seconds = (
        Decimal(days or 0) * 86400 + Decimal(hours or 0) * 3600
        + Decimal(minutes or 0) * 60 + Decimal(secs or 0)
    )
    if neg:
        return Duration(-total_months, -total_seconds)
    return Duration(total_months, total_seconds)


def _cast_from_text(text: str, target: AtomicType) -> AtomicValue:
    stripped = text.strip()
    if target in STRING_KINDS or target is AtomicType.QNAME:
        return AtomicValue(target, text if target is not AtomicType.QNAME else stripped)
    if target is AtomicType.BOOLEAN:
        if stripped in ("true", "1"):
            return boolean(True)
        if stripped in ("false", "0"):
            return boolean(False)
    elif target in INTEGER_KINDS:
        if _INTEGER_RE.match(stripped):
            return _check_integer(int(stripped), target)
    elif target is AtomicType.DECIMAL:
        if _DECIMAL_RE.match(stripped):
            return decimal(Decimal(stripped))
    elif target in (AtomicType.DOUBLE, AtomicType.FLOAT):
        if _DOUBLE_RE.match(stripped):
            special = {"INF": math.inf, "+INF": math.inf, "-INF": -math.inf, "NaN": math.nan}
            value = special[stripped] if stripped in special else float(stripped)
            return AtomicValue(target, value)
    elif target is AtomicType.DATETIME:
        return AtomicValue(target, parse_datetime(stripped))
    elif target is AtomicType.DATE:
        return AtomicValue(target, parse_date(stripped))
    elif target is AtomicType.TIME:
        return AtomicValue(target, parse_time(stripped))
    elif target is AtomicType.DURATION:
        return AtomicValue(target, parse_duration(stripped))
    elif target is AtomicType.BINARY:
        try:
            return AtomicValue(target, bytes.fromhex(stripped))
        except ValueError:
            pass
    raise XQueryTypeError(f"cannot cast {text!r} to {target.value}", "FORG0001")


def _check_integer(value: int, target: AtomicType) -> AtomicValue:
    bounds = _INTEGER_RANGES.get(target)
    if bounds and not bounds[0] <= value <= bounds[1]:
        raise XQueryTypeError(f"{value} out of range for {target.value}", "FORG0001")
    return AtomicValue(target, value)


def _convert_numeric(value: AtomicValue, target: AtomicType) -> AtomicValue:
    payload = value.value
    if target in (AtomicType.DOUBLE, AtomicType.FLOAT):
        return AtomicValue(target, float(payload))
    if isinstance(payload, float) and (math.isnan(payload) or math.isinf(payload)):
        raise XQueryTypeError(f"cannot cast {lexical(value)} to {target.value}", "FOCA0002")
    if target is AtomicType.DECIMAL:
        if isinstance(payload, float):
            return decimal(Decimal(repr(payload)))
        return decimal(Decimal(payload))
    return _check_integer(int(payload), target)


def cast(value: AtomicValue, target: AtomicType) -> AtomicValue:
    """Lexical/value cast between atomic kinds (constructor-function semantics)."""
    source = value.kind
    if source is target:
        return value
    if source in STRING_KINDS:
        return _cast_from_text(value.value, target)
    if target in STRING_KINDS:
        return AtomicValue(target, lexical(value))
    if source in NUMERIC_KINDS and target in NUMERIC_KINDS:
        return _convert_numeric(value, target)
    if source is AtomicType.BOOLEAN and target in NUMERIC_KINDS:
        return _convert_numeric(integer(1 if value.value else 0), target)
    if source in NUMERIC_KINDS and target is AtomicType.BOOLEAN:
        return boolean(effective_boolean_value((value,)))
    if source is AtomicType.DATETIME and target is AtomicType.DATE:
        return AtomicValue(target, value.value.date())
    if source is AtomicType.DATETIME and target is AtomicType.TIME:
        return AtomicValue(target, value.value.time())
    if source is AtomicType.DATE and target is AtomicType.DATETIME:
        return AtomicValue(target, pytz.utc.localize(dt.datetime.combine(value.value, dt.time())))
    raise XQueryTypeError(f"cannot cast {source.value} to {target.value}", "XPTY0004")


def promote(value: AtomicValue, target: AtomicType) -> AtomicValue:
    """
    Function-conversion promotion: identity, untypedAtomic cast by lexical
    rules, or numeric widening along byte→short→integer→long→decimal→float→double.
    """
    source = value.kind
    if source is target:
        return value
    if source is AtomicType.UNTYPED:
        return cast(value, target)
    if source in NUMERIC_KINDS and target in NUMERIC_KINDS:
        if _NUMERIC_RANK[source] <= _NUMERIC_RANK[target]:
            return _convert_numeric(value, target)
    raise XQueryTypeError(f"cannot promote {source.value} to {target.value}", "XPTY0004")


def wider_numeric(a: AtomicType, b: AtomicType) -> AtomicType:
    return a if _NUMERIC_RANK[a] >= _NUMERIC_RANK[b] else b


# ── Sequence types used by treat ─────────────────────────────────────

def matches_type(item: Item, type_name: str) -> bool:
    """Item-type test for the names that appear in plans (element_node, any_type, ...)."""
    if type_name in ("any_type", "item"):
        return True
    if isinstance(item, Node):
        if type_name == "node":
            return True
        if type_name == "element_node":
            return item.kind in (NodeKind.ELEMENT, NodeKind.DOCUMENT)
        if type_name == "document_node":
            return item.kind is NodeKind.DOCUMENT
        if type_name == "attribute_node":
            return item.kind is NodeKind.ATTRIBUTE
        return False
    if type_name == "atomic":
        return True
    try:
        kind = AtomicType(type_name)
    except ValueError:
        return False
    if kind is item.kind:
        return True
    return kind is AtomicType.DECIMAL and item.kind in INTEGER_KINDS


def atomic_type(name: str) -> AtomicType:
    try:
        return AtomicType(name)
    except ValueError as exc:
        raise XQueryTypeError(f"unknown atomic type {name!r}", "XPST0051") from exc
