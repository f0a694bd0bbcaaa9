"""
XML ingestion — SAX-style lxml target builder producing XDM trees, partition
specs over collection directories, and streaming collection scans with an
optional pushed-down child path.
"""

from __future__ import annotations

import hashlib
import io
import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import BinaryIO, Iterable, Iterator

import numpy as np
from lxml import etree

from errors import IngestIoError, ParseError
from xdm import Node, NodeId, NodeKind

log = logging.getLogger(__name__)

CHUNK_BYTES = 64 * 1024
DOC_PARTITION = -1

_ENCODING_RE = re.compile(rb"""^\s*<\?xml[^>]*?encoding\s*=\s*["']([A-Za-z0-9._-]+)["']""")
_ALLOWED_ENCODINGS = {"utf-8", "utf8", "iso-8859-1", "latin-1", "latin1", "iso8859-1"}


# ── Handles and partitioning ─────────────────────────────────────────

@dataclass(frozen=True)
class DocumentHandle:
    partition: int
    path: str
    doc_seq: int


@dataclass(frozen=True)
class PartitionSpec:
    """
    Per-partition input roots.  An entry is either a directory (every
    ``.xml`` file directly inside it) or a single file.
    """

    partition_count: int
    roots: tuple[tuple[str, ...], ...]

    def __post_init__(self) -> None:
        if self.partition_count < 1:
            raise ValueError("partition_count must be positive")
        if len(self.roots) != self.partition_count:
            raise ValueError(
                f"{len(self.roots)} root entries for {self.partition_count} partitions"
            )

    @classmethod
    def for_directory(cls, root: str | Path, partition_count: int) -> "PartitionSpec":
        """Cut the collection's sorted file list into contiguous ranges."""
        files = collection_files(Path(root))
        ranges = np.array_split(np.arange(len(files)), partition_count)
        roots = tuple(tuple(str(files[i]) for i in idx) for idx in ranges)
        return cls(partition_count, roots)

    def documents(self, partition: int) -> list[DocumentHandle]:
        if not 0 <= partition < self.partition_count:
            raise ValueError(f"partition {partition} outside 0..{self.partition_count - 1}")
        paths: list[str] = []
        for entry in self.roots[partition]:
            p = Path(entry)
            if p.is_dir():
                paths.extend(str(f) for f in _xml_files_in(p))
            elif p.suffix == ".xml" and p.is_file():
                paths.append(str(p))
            elif not p.exists():
                raise IngestIoError("no such file or directory", entry)
        paths.sort()
        return [DocumentHandle(partition, path, seq) for seq, path in enumerate(paths)]


def _xml_files_in(directory: Path) -> list[Path]:
    try:
        return sorted(f for f in directory.iterdir() if f.suffix == ".xml" and f.is_file())
    except OSError as exc:
        raise IngestIoError(f"cannot list directory: {exc}", str(directory)) from exc


def collection_files(root: Path) -> list[Path]:
    """``.xml`` files in ``root`` and one level of chunk subdirectories, by relative path."""
    if not root.is_dir():
        raise IngestIoError("collection directory not found", str(root))
    files = _xml_files_in(root)
    try:
        subdirs = sorted(d for d in root.iterdir() if d.is_dir())
    except OSError as exc:
        raise IngestIoError(f"cannot list directory: {exc}", str(root)) from exc
    for sub in subdirs:
        files.extend(_xml_files_in(sub))
    return sorted(files, key=lambda f: f.relative_to(root).as_posix())


class Catalog:
    """Resolves collection and document URIs against the data root."""

    def __init__(self, data_root: str | Path | None, partition_count: int = 1) -> None:
        self.data_root = Path(data_root) if data_root else None
        self.partition_count = partition_count
        self._specs: dict[str, PartitionSpec] = {}

    def resolve(self, uri: str) -> Path:
        if self.data_root is not None:
            candidate = self.data_root / uri.lstrip("/")
            if uri.startswith("/") or candidate.exists():
                return candidate
        return Path(uri)

    def partition_spec(self, collection: str) -> PartitionSpec:
        if collection not in self._specs:
            self._specs[collection] = PartitionSpec.for_directory(
                self.resolve(collection), self.partition_count
            )
        return self._specs[collection]

    def collection_bytes(self, collection: str) -> int:
        try:
            return sum(f.stat().st_size for f in collection_files(self.resolve(collection)))
        except IngestIoError:
            return 0

    def documents(self, collection: str) -> list[DocumentHandle]:
        spec = self.partition_spec(collection)
        return [h for p in range(spec.partition_count) for h in spec.documents(p)]

    def document(self, uri: str) -> Node:
        return load_document(str(self.resolve(uri).resolve()))


# ── Tree builder (lxml parser target) ────────────────────────────────

@dataclass
class ScanStats:
    documents: int = 0
    nodes_yielded: int = 0
    max_materialized_bytes: int = 0

    def record(self, node: Node) -> None:
        self.nodes_yielded += 1
        self.max_materialized_bytes = max(self.max_materialized_bytes, node.nbytes)


@dataclass
class _Open:
    kind: NodeKind
    name: str | None
    pre: int
    matched: bool = False
    attributes: tuple[Node, ...] = ()
    children: list[Node] | None = None


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


class _TreeBuilder:
    """
    Assigns pre-order numbers to every node in document order and
    materializes only the subtrees reached by ``steps`` (the whole document
    when ``steps`` is empty).  Finished matches accumulate in ``ready``.
    """

    def __init__(self, handle: DocumentHandle, steps: tuple[str, ...], path: str | None) -> None:
        self.partition = handle.partition
        self.doc_seq = handle.doc_seq
        self.steps = steps
        self.path = path
        self.counter = 0
        self.text: list[str] = []
        self.ready: list[Node] = []
        doc = _Open(NodeKind.DOCUMENT, None, self._next())
        if not steps:
            doc.children = []
        self.stack: list[_Open] = [doc]

    def _next(self) -> int:
        pre = self.counter
        self.counter += 1
        return pre

    def _id(self, pre: int) -> NodeId:
        return NodeId(self.partition, self.doc_seq, pre)

    def _flush_text(self) -> None:
        if not self.text:
            return
        value = "".join(self.text)
        self.text.clear()
        pre = self._next()
        parent = self.stack[-1]
        if parent.children is not None:
            parent.children.append(Node(self._id(pre), NodeKind.TEXT, value=value, nbytes=len(value)))

    def _attach(self, node: Node, matched: bool) -> None:
        parent = self.stack[-1]
        if parent.children is not None:
            parent.children.append(node)
        elif matched:
            self.ready.append(node)

    # lxml target interface

    def doctype(self, name, pubid, system) -> None:
        if pubid or system:
            raise ParseError("external DTD references are not allowed", self.path)

    def start(self, tag, attrib) -> None:
        self._flush_text()
        name = _local(tag)
        parent = self.stack[-1]
        frame = _Open(NodeKind.ELEMENT, name, self._next())
        if parent.children is not None:
            frame.children = []
        elif self.steps and len(self.stack) == len(self.steps):
            names = [f.name for f in self.stack[1:]] + [name]
            if tuple(names) == self.steps:
                frame.matched = True
                frame.children = []
        attrs = []
        for key, value in attrib.items():
            pre = self._next()
            if frame.children is not None:
                attr_name = _local(key)
                attrs.append(Node(
                    self._id(pre), NodeKind.ATTRIBUTE, attr_name,
                    value=value, nbytes=len(attr_name) + len(value) + 4,
                ))
        frame.attributes = tuple(attrs)
        self.stack.append(frame)

    def end(self, tag) -> None:
        self._flush_text()
        frame = self.stack.pop()
        if frame.children is None:
            return
        children = tuple(frame.children)
        nbytes = 2 * len(frame.name) + 5 + sum(a.nbytes for a in frame.attributes) + sum(
            c.nbytes for c in children
        )
        node = Node(self._id(frame.pre), NodeKind.ELEMENT, frame.name, children, frame.attributes, nbytes=nbytes)
        self._attach(node, frame.matched)

    def data(self, text) -> None:
        self.text.append(text)

    def comment(self, text) -> None:
        self._flush_text()
        pre = self._next()
        if self.stack[-1].children is not None:
            self.stack[-1].children.append(
                Node(self._id(pre), NodeKind.COMMENT, value=text, nbytes=len(text) + 7)
            )

    def pi(self, target, data=None) -> None:
        self._flush_text()
        pre = self._next()
        if self.stack[-1].children is not None:
            value = data or ""
            self.stack[-1].children.append(Node(
                self._id(pre), NodeKind.PI, target, value=value, nbytes=len(target) + len(value) + 5,
            ))

    def close(self) -> None:
        self._flush_text()
        doc = self.stack[0]
        if doc.children is not None:
            children = tuple(doc.children)
            self.ready.append(Node(
                self._id(doc.pre), NodeKind.DOCUMENT, children=children,
                nbytes=sum(c.nbytes for c in children),
            ))


# ── Parsing ──────────────────────────────────────────────────────────

def _check_encoding(head: bytes, path: str | None) -> None:
    if head.startswith((b"\xff\xfe", b"\xfe\xff")):
        raise ParseError("UTF-16 input is not supported", path, 0)
    m = _ENCODING_RE.match(head.removeprefix(b"\xef\xbb\xbf"))
    if m and m.group(1).decode("ascii").lower() not in _ALLOWED_ENCODINGS:
        raise ParseError(f"unsupported encoding {m.group(1).decode('ascii')!r}", path, m.start(1))


def _byte_offset(source: bytes | str, line: int, column: int) -> int:
    """Translate lxml's (line, column) into a byte offset of the input."""
    if isinstance(source, bytes):
        lines = source.splitlines(keepends=True)
    else:
        with open(source, "rb") as f:
            lines = [next(f, b"") for _ in range(max(line - 1, 0))]
    return sum(len(l) for l in lines[: max(line - 1, 0)]) + max(column - 1, 0)


def _parse_stream(
    stream: BinaryIO,
    handle: DocumentHandle,
    steps: tuple[str, ...],
    source: bytes | str,
    stats: ScanStats | None,
) -> Iterator[Node]:
    path = source if isinstance(source, str) else None
    builder = _TreeBuilder(handle, steps, path)
    parser = etree.XMLParser(
        target=builder, resolve_entities=False, no_network=True, load_dtd=False, huge_tree=True,
    )
    first = True
    try:
        while True:
            chunk = stream.read(CHUNK_BYTES)
            if first:
                _check_encoding(chunk, path)
                first = False
            if not chunk:
                break
            parser.feed(chunk)
            yield from _drain(builder, stats)
        parser.close()
    except etree.XMLSyntaxError as exc:
        line, column = exc.position if exc.position else (1, 1)
        raise ParseError(exc.msg, path, _byte_offset(source, line, column)) from exc
    yield from _drain(builder, stats)
    if stats is not None:
        stats.documents += 1


def _drain(builder: _TreeBuilder, stats: ScanStats | None) -> Iterator[Node]:
    ready, builder.ready = builder.ready, []
    for node in ready:
        if stats is not None:
            stats.record(node)
        yield node


def parse_document(data: bytes, handle: DocumentHandle) -> Node:
    """Parse a complete document held in memory."""
    nodes = list(_parse_stream(io.BytesIO(data), handle, (), data, None))
    return nodes[0]


def parse_path(path: str, handle: DocumentHandle, steps: Iterable[str] = (), stats: ScanStats | None = None) -> Iterator[Node]:
    try:
        stream = open(path, "rb")
    except OSError as exc:
        raise IngestIoError(f"cannot open file: {exc}", path) from exc
    with stream:
        yield from _parse_stream(stream, handle, tuple(steps), path, stats)


@lru_cache(maxsize=16)
def load_document(path: str) -> Node:
    """Whole-document load for ``doc()``; same URI, same node identities."""
    digest = hashlib.blake2b(path.encode("utf-8"), digest_size=6).digest()
    handle = DocumentHandle(DOC_PARTITION, path, int.from_bytes(digest, "big"))
    log.debug("loading document %s", path)
    return next(parse_path(path, handle))


# ── Collection scans ─────────────────────────────────────────────────

def scan_collection(spec: PartitionSpec, partition: int, stats: ScanStats | None = None) -> Iterator[Node]:
    """One document node per file of the partition, in path order."""
    for handle in spec.documents(partition):
        log.debug("scanning %s (partition %d, doc %d)", handle.path, partition, handle.doc_seq)
        yield from parse_path(handle.path, handle, (), stats)


def scan_collection_with_path(
    spec: PartitionSpec,
    partition: int,
    steps: Iterable[str],
    stats: ScanStats | None = None,
) -> Iterator[Node]:
    """
    Nodes reached from each document by the child steps, in document
    order.  Only matched subtrees are materialized.
    """
    steps = tuple(steps)
    if not steps:
        yield from scan_collection(spec, partition, stats)
        return
    for handle in spec.documents(partition):
        log.debug("scanning %s for /%s", handle.path, "/".join(steps))
        yield from parse_path(handle.path, handle, steps, stats)
