"""
Shared fixtures — isolated settings, the bookstore sample, small book
collections and one generated weather corpus per session.
"""

from __future__ import annotations

from pathlib import Path

import pytest

import settings
from datagen import GenSpec, generate
from settings import RunConfig

REPO = Path(__file__).resolve().parent.parent
QUERY_DIR = REPO / "queries"
PLAN_DIR = Path(__file__).resolve().parent / "fixtures" / "plans"

BOOK = """<?xml version="1.0" encoding="UTF-8"?>
<bookstore>
  <book id="{id}"><title>{title}</title><year>{year}</year><price>{price}</price></book>
</bookstore>
"""

ANN_BOOKS = [("1", "Everyday Italian", 2005, "30.00"), ("2", "Harry Potter", 2005, "29.99"),
             ("3", "Learning XML", 2003, "39.95")]
JOE_BOOKS = [("7", "Harry Potter", 2006, "24.50"), ("8", "XQuery Kick Start", 2003, "49.99"),
             ("9", "Everyday Italian", 2007, "31.00"), ("10", "Learning XML", 2004, "35.00")]


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Keep every test away from the real ~/.xqflow/settings.json."""
    path = tmp_path / "settings.json"
    monkeypatch.setattr(settings, "SETTINGS_PATH", path)
    return path


def write_books(directory: Path, books) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for i, (book_id, title, year, price) in enumerate(books):
        (directory / f"book-{i:02d}.xml").write_text(
            BOOK.format(id=book_id, title=title, year=year, price=price), encoding="utf-8",
        )
    return directory


@pytest.fixture
def library(tmp_path) -> Path:
    """Data root with /books (both lists), /ann-books and /joe-books."""
    root = tmp_path / "library"
    write_books(root / "ann-books", ANN_BOOKS)
    write_books(root / "joe-books", JOE_BOOKS)
    write_books(root / "books", ANN_BOOKS + JOE_BOOKS)
    return root


@pytest.fixture(scope="session")
def weather(tmp_path_factory) -> tuple[Path, dict[str, str]]:
    """A small generated corpus and its manifest, shared by the whole session."""
    root = tmp_path_factory.mktemp("weather")
    spec = GenSpec(seed=7, station_count=6, days=10, partitions=4, records_per_file=60)
    manifest = generate(spec, root)
    return root, manifest


@pytest.fixture
def make_config(tmp_path):
    """RunConfig factory; inline workers keep the tests in one process."""

    def make(data_root: str | Path = "", partitions: int = 1, **changes) -> RunConfig:
        scratch = tmp_path / "scratch"
        scratch.mkdir(exist_ok=True)
        base = RunConfig(
            data_root=str(data_root), partitions=partitions, workers="inline",
            scratch_dir=str(scratch),
        )
        return base.with_(**changes)

    return make


def query_text(name: str) -> str:
    return (QUERY_DIR / f"{name}.xq").read_text(encoding="utf-8")
