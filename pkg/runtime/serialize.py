"""
Result serialization — nodes as XML markup, atomics by their lexical form,
one item per line.
"""

from __future__ import annotations

from xml.sax.saxutils import escape, quoteattr

from lxml import etree

import xdm
from xdm import Node, NodeKind, XDMSequence


def _element(node: Node, parent: etree._Element | None) -> etree._Element:
    el = etree.Element(node.name) if parent is None else etree.SubElement(parent, node.name)
    for attr in node.attributes:
        el.set(attr.name, attr.value)
    last: etree._Element | None = None
    for child in node.children:
        if child.kind is NodeKind.ELEMENT:
            last = _element(child, el)
            continue
        if child.kind is NodeKind.TEXT:
            if last is None:
                el.text = (el.text or "") + child.value
            else:
                last.tail = (last.tail or "") + child.value
            continue
        if child.kind is NodeKind.COMMENT:
            last = etree.Comment(child.value)
        else:
            last = etree.ProcessingInstruction(child.name, child.value or None)
        el.append(last)
    return el


def serialize_node(node: Node) -> str:
    kind = node.kind
    if kind is NodeKind.ELEMENT:
        return etree.tostring(_element(node, None), encoding="unicode", with_tail=False)
    if kind is NodeKind.DOCUMENT:
        return "".join(serialize_node(c) for c in node.children)
    if kind is NodeKind.ATTRIBUTE:
        return f"{node.name}={quoteattr(node.value)}"
    if kind is NodeKind.TEXT:
        return escape(node.value)
    if kind is NodeKind.COMMENT:
        return f"<!--{node.value}-->"
    return f"<?{node.name} {node.value}?>" if node.value else f"<?{node.name}?>"


def serialize_item(item) -> str:
    if isinstance(item, Node):
        return serialize_node(item)
    return xdm.lexical(item)


def serialize_result(seq: XDMSequence) -> str:
    """Items separated by newlines; the empty sequence serializes to the empty string."""
    return "\n".join(serialize_item(item) for item in seq)
