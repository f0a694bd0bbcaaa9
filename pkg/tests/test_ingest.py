"""
XML ingestion — tree building, node numbering, partitioned and path-pushed scans.
"""

from __future__ import annotations

import random

import pytest

from conftest import QUERY_DIR
from errors import IngestIoError, ParseError
from xdm import NodeKind
from xml_ingest import (
    Catalog,
    DocumentHandle,
    PartitionSpec,
    ScanStats,
    load_document,
    parse_document,
    scan_collection,
    scan_collection_with_path,
)

HANDLE = DocumentHandle(0, "<memory>", 0)


def _preorder(node):
    yield node.id.pre_order
    for attr in node.attributes:
        yield attr.id.pre_order
    for child in node.children:
        yield from _preorder(child)


def _random_tree(rng: random.Random, depth: int = 3) -> str:
    def element(level: int) -> str:
        name = rng.choice(["a", "b", "c"])
        attrs = "".join(f' k{i}="{rng.randrange(100)}"' for i in range(rng.randrange(3)))
        if level == depth:
            return f"<{name}{attrs}>t{rng.randrange(100)}</{name}>"
        inner = "".join(element(level + 1) for _ in range(rng.randrange(1, 4)))
        return f"<{name}{attrs}>{inner}</{name}>"

    return element(1)


def _books_dir(tmp_path, names=("b.xml", "a.xml")):
    d = tmp_path / "books"
    d.mkdir()
    for name in names:
        (d / name).write_text(f"<bookstore><book id='{name}'><title>{name}</title></book></bookstore>")
    return d


# ── parse_document ───────────────────────────────────────────────────

def test_parse_bookstore_listing():
    doc = parse_document((QUERY_DIR / "book.xml").read_bytes(), HANDLE)
    assert doc.kind is NodeKind.DOCUMENT
    (store,) = list(doc.element_children())
    assert store.name == "bookstore"
    book = next(store.element_children("book"))
    assert book.attribute("id").value == "1"
    assert book.attribute("category").value == "COOKING"
    assert next(book.element_children("title")).string_value == "Everyday Italian"


def test_parse_minimal_document():
    doc = parse_document(b"<a/>", HANDLE)
    (a,) = doc.children
    assert a.kind is NodeKind.ELEMENT and a.name == "a"
    assert a.children == () and a.attributes == ()
    assert doc.id.pre_order == 0


@pytest.mark.parametrize("seed", range(5))
def test_preorder_matches_recursive_descent(seed):
    text = _random_tree(random.Random(seed))
    doc = parse_document(text.encode(), HANDLE)
    numbers = list(_preorder(doc))
    assert numbers == list(range(len(numbers)))


def test_parent_precedes_descendants():
    doc = parse_document(_random_tree(random.Random(3)).encode(), HANDLE)

    def check(node):
        for child in (*node.attributes, *node.children):
            assert node.id.pre_order < child.id.pre_order
            check(child)

    check(doc)


def test_malformed_input_reports_offset():
    with pytest.raises(ParseError) as info:
        parse_document(b"<a><b></a>", HANDLE)
    assert info.value.offset is not None


def test_unsupported_encoding_is_rejected():
    with pytest.raises(ParseError):
        parse_document(b'<?xml version="1.0" encoding="EBCDIC-US"?><a/>', HANDLE)


def test_predefined_entities_and_character_references():
    doc = parse_document(b"<a>x &amp; y &#65;</a>", HANDLE)
    assert doc.string_value == "x & y A"


# ── Collection scans ─────────────────────────────────────────────────

def test_scan_in_lexicographic_path_order(tmp_path):
    d = _books_dir(tmp_path)
    (d / "notes.txt").write_text("ignored")
    spec = PartitionSpec.for_directory(d, 1)
    docs = list(scan_collection(spec, 0))
    titles = [doc.string_value for doc in docs]
    assert titles == ["a.xml", "b.xml"]
    assert [doc.id.doc_seq for doc in docs] == [0, 1]


def test_scan_empty_directory(tmp_path):
    d = tmp_path / "empty"
    d.mkdir()
    assert list(scan_collection(PartitionSpec.for_directory(d, 1), 0)) == []


def test_missing_collection_directory(tmp_path):
    with pytest.raises(IngestIoError):
        PartitionSpec.for_directory(tmp_path / "nosuch", 2)


def test_partitions_are_disjoint_and_cover_the_collection(tmp_path):
    d = _books_dir(tmp_path, [f"f{i:02d}.xml" for i in range(10)])
    spec = PartitionSpec.for_directory(d, 3)
    seen = []
    for p in range(3):
        handles = spec.documents(p)
        assert [h.doc_seq for h in handles] == list(range(len(handles)))
        assert all(h.partition == p for h in handles)
        seen.extend(h.path for h in handles)
    assert len(seen) == len(set(seen)) == 10


def test_partition_spec_validates_roots():
    with pytest.raises(ValueError):
        PartitionSpec(2, ((),))


def test_path_scan_matches_full_scan(library):
    spec = PartitionSpec.for_directory(library / "books", 2)
    for p in range(2):
        pushed = list(scan_collection_with_path(spec, p, ["bookstore", "book"]))
        full = [
            book
            for doc in scan_collection(spec, p)
            for store in doc.element_children("bookstore")
            for book in store.element_children("book")
        ]
        assert [n.id for n in pushed] == [n.id for n in full]
        assert [n.string_value for n in pushed] == [n.string_value for n in full]


def test_path_scan_without_match(library):
    spec = PartitionSpec.for_directory(library / "books", 1)
    assert list(scan_collection_with_path(spec, 0, ["nosuch"])) == []


def test_path_scan_ids_increase(weather):
    root, _ = weather
    spec = PartitionSpec.for_directory(root / "sensors", 2)
    for p in range(2):
        ids = [n.id for n in scan_collection_with_path(spec, p, ["dataCollection", "data"])]
        assert ids == sorted(ids)
        assert len(ids) == len(set(ids))


def test_path_scan_materializes_only_matched_subtrees(tmp_path):
    d = tmp_path / "sensors"
    d.mkdir()
    records = "".join(
        f"<data><date>2000-01-{i % 28 + 1:02d}T00:00:00.000</date><dataType>TMAX</dataType>"
        f"<station>S{i}</station><value>{i}</value></data>"
        for i in range(500)
    )
    (d / "big.xml").write_text(f"<dataCollection>{records}</dataCollection>")
    spec = PartitionSpec.for_directory(d, 1)
    whole = next(scan_collection(spec, 0))
    stats = ScanStats()
    matched = list(scan_collection_with_path(spec, 0, ["dataCollection", "data"], stats))
    assert len(matched) == 500
    assert stats.nodes_yielded == 500
    assert stats.max_materialized_bytes * 100 < whole.nbytes


# ── Catalog ──────────────────────────────────────────────────────────

def test_catalog_resolves_against_data_root(library):
    catalog = Catalog(library, 2)
    assert catalog.resolve("/books") == library / "books"
    assert len(catalog.documents("/joe-books")) == 4
    assert catalog.collection_bytes("/ann-books") > 0
    assert catalog.collection_bytes("/nosuch") == 0


def test_doc_loads_once_per_uri():
    path = str(QUERY_DIR / "book.xml")
    assert load_document(path) is load_document(path)
    assert load_document(path).id.partition == -1
