"""
Runtime — frames, pipelined execution, worker modes and error propagation.
"""

from __future__ import annotations

import pytest

import xdm
from compiler.physical import AggPhase, PhysKind, walk_physical
from errors import ConfigError, ExecutionError, FrameOverflow, XQueryTypeError
from processor import compare_engines, normalized, open_catalog, read_query, run_query
from runtime.frames import FrameAppender, RuntimeStats, tuple_size
from runtime.serialize import serialize_item, serialize_result
from conftest import QUERY_DIR, write_books


def _big_collection(root, records: int = 400, files: int = 1):
    d = root / "sensors"
    d.mkdir(parents=True)
    per_file = -(-records // files)
    for f in range(files):
        body = "".join(
            f"<data><date>2000-01-{i % 28 + 1:02d}T00:00:00.000</date><dataType>TMAX</dataType>"
            f"<station>S{i % 7}</station><value>{i}</value></data>"
            for i in range(f * per_file, min(records, (f + 1) * per_file))
        )
        (d / f"big-{f}.xml").write_text(f"<dataCollection>{body}</dataCollection>")
    return root


# ── Frames ───────────────────────────────────────────────────────────

def test_frame_appender_packs_and_flushes():
    frames = []
    stats = RuntimeStats()
    appender = FrameAppender(100, frames.append, stats)
    row = {1: (xdm.integer(1),)}
    size = tuple_size(row)
    for _ in range(10):
        appender.append(row)
    appender.flush()
    per_frame = 100 // size
    assert all(len(f) <= per_frame for f in frames)
    assert sum(len(f) for f in frames) == 10
    assert stats.tuples_out == 10 and stats.frames_out == len(frames)
    assert stats.max_buffered_tuples == per_frame


def test_frame_overflow():
    appender = FrameAppender(16, lambda frame: None)
    with pytest.raises(FrameOverflow) as info:
        appender.append({1: (xdm.string("x" * 100),)})
    assert info.value.capacity == 16


def test_stats_merge():
    a, b = RuntimeStats(tuples_out=3, max_tuple_bytes=10), RuntimeStats(tuples_out=4, max_tuple_bytes=7)
    a.exchange_bytes[1] = 5
    b.exchange_bytes[1] = 6
    merged = a.merge(b)
    assert merged.tuples_out == 7 and merged.max_tuple_bytes == 10
    assert merged.exchange_bytes[1] == 11


# ── Execution ────────────────────────────────────────────────────────

def test_bookstore_query(make_config):
    config = make_config(QUERY_DIR)
    outcome = run_query(read_query(str(QUERY_DIR / "bookstore.xq")), config)
    assert len(outcome.result) == 2
    assert outcome.text.startswith('<book id="1" category="COOKING">')
    assert "Harry Potter" in outcome.text


def test_atomic_results_serialize_lexically(make_config):
    outcome = run_query("(1 div 4, 2.5e0 * 2, 7 - 3, \"a\")", make_config())
    assert [serialize_item(i) for i in outcome.result] == ["0.25", "5", "4", "a"]
    assert serialize_result(()) == ""


def test_pipelined_scan_buffers_less_than_the_input(tmp_path, make_config):
    root = _big_collection(tmp_path)
    config = make_config(root, partitions=1, frame_size=4096)
    outcome = run_query('collection("/sensors")/dataCollection/data', config)
    assert len(outcome.result) == 400
    assert 0 < outcome.stats.max_buffered_tuples < 400
    assert outcome.stats.max_buffered_bytes <= 4096


def test_whole_document_tuples_overflow_without_pushdown(tmp_path, make_config):
    root = _big_collection(tmp_path)
    query = 'count(for $r in collection("/sensors")/dataCollection/data return $r)'
    pushed = run_query(query, make_config(root, frame_size=4096))
    assert pushed.text == "400"
    with pytest.raises(ExecutionError) as info:
        run_query(query, make_config(root, frame_size=4096, pushdown=False))
    assert isinstance(info.value.__cause__, FrameOverflow)
    assert info.value.partition == 0


def test_type_errors_keep_their_exit_code(make_config):
    with pytest.raises((ExecutionError, XQueryTypeError)) as info:
        run_query('"a" + 1', make_config())
    assert info.value.exit_code == 3


@pytest.mark.parametrize("workers", ["inline", "thread", "process"])
def test_worker_modes_agree(library, make_config, workers):
    query = 'for $b in collection("/books")/bookstore/book where $b/year >= 2005 return $b/title'
    outcome = run_query(query, make_config(library, partitions=3, workers=workers))
    assert sorted(n.string_value for n in outcome.result) == [
        "Everyday Italian", "Everyday Italian", "Harry Potter", "Harry Potter",
    ]


def test_exchanges_are_counted(library, make_config):
    query = (
        'for $r in collection("/ann-books")/bookstore/book '
        'for $s in collection("/joe-books")/bookstore/book '
        'where $r/title eq $s/title return $s/year'
    )
    outcome = run_query(query, make_config(library, partitions=2))
    assert sorted(xdm.lexical(xdm.atomize_item(i)) for i in outcome.result) == ["2004", "2006", "2007"]
    assert outcome.stats.exchange_tuples
    assert sum(outcome.stats.exchange_bytes.values()) > 0
    assert outcome.stats.partitions_run >= 2


def test_hash_join_under_a_tiny_budget(tmp_path, make_config):
    root = tmp_path / "shelves"
    titles = [f"Title {i:02d}" for i in range(40)]
    write_books(root / "left", [(f"L{i}", t, 2000, "10.00") for i, t in enumerate(titles)])
    write_books(root / "right", [(f"R{i}", t, 2001, "12.00") for i, t in enumerate(titles[::2])])
    query = (
        'for $r in collection("/left")/bookstore/book '
        'for $s in collection("/right")/bookstore/book '
        'where $r/title eq $s/title return $r/@id'
    )
    roomy = run_query(query, make_config(root, partitions=1))
    tight = run_query(query, make_config(root, partitions=1, memory_budget=1))
    assert len(roomy.result) == 20
    assert normalized(roomy.result) == normalized(tight.result)
    assert roomy.stats.spill_files == 0
    assert tight.stats.spill_files > 0 and tight.stats.spilled_bytes > 0
    assert not list((tmp_path / "scratch").glob("xqflow-spill-*"))


def _signed_zeros(root):
    for side, values in (("left", ["0", "1", "2"]), ("right", ["-0", "-0.0", "0.0", "1", "3"])):
        d = root / side
        d.mkdir(parents=True)
        for i, v in enumerate(values):
            (d / f"item-{i}.xml").write_text(f'<items><item id="{side[0]}{i}"><v>{v}</v></item></items>')
    return root


@pytest.mark.parametrize("partitions", [1, 2, 4])
@pytest.mark.parametrize("budget", [1, 1 << 20])
def test_signed_zero_keys_join_at_every_partition_count(tmp_path, make_config, partitions, budget):
    root = _signed_zeros(tmp_path / "zeros")
    query = (
        'for $a in collection("/left")/items/item '
        'for $b in collection("/right")/items/item '
        'where double($a/v) eq double($b/v) return $b/v'
    )
    outcome = run_query(query, make_config(root, partitions=partitions, memory_budget=budget))
    assert "HYBRID-HASH-JOIN" in outcome.compiled.dump("physical")
    assert sorted(n.string_value for n in outcome.result) == ["-0", "-0.0", "0.0", "1"]


def test_document_order_within_a_partition(library, make_config):
    outcome = run_query('collection("/books")/bookstore/book', make_config(library, partitions=1))
    ids = [n.id for n in outcome.result]
    assert ids == sorted(ids)


# ── Engines side by side ─────────────────────────────────────────────

def test_compare_engines_on_the_library(library, make_config):
    diff = compare_engines(
        'for $b in collection("/books")/bookstore/book where $b/price > 30 return $b/title',
        make_config(library, partitions=2),
    )
    assert diff.agree
    assert diff.missing() == [] and diff.extra() == []


def test_open_catalog_uses_the_partition_count(library, make_config):
    catalog = open_catalog(make_config(library, partitions=3))
    assert catalog.partition_count == 3


def test_read_query_accepts_inline_text():
    assert read_query("1 + 1") == "1 + 1"
    assert read_query(str(QUERY_DIR / "bookstore.xq")).strip() == 'doc("book.xml")/bookstore/book'


def test_two_step_count_moves_one_tuple_per_partition(weather, make_config):
    root, manifest = weather
    outcome = run_query(
        'count(for $r in collection("/sensors")/dataCollection/data return $r)', make_config(root, partitions=4),
    )
    assert outcome.text == manifest["records"]
    (merge,) = [
        op for op in walk_physical(outcome.compiled.physical.root)
        if op.kind is PhysKind.EXCHANGE and op.input.kind is PhysKind.STREAMING_AGGREGATE
        and op.input.phase is AggPhase.LOCAL
    ]
    assert outcome.stats.exchange_tuples[merge.op_id] == 4


# ── Exchange queues ──────────────────────────────────────────────────

@pytest.mark.parametrize("capacity", [1, 3])
def test_exchange_queues_stay_within_capacity(tmp_path, make_config, capacity):
    root = _big_collection(tmp_path, files=4)
    config = make_config(root, partitions=2, workers="thread", frame_size=4096, queue_frames=capacity)
    outcome = run_query('collection("/sensors")/dataCollection/data', config)
    assert len(outcome.result) == 400
    assert outcome.stats.max_queued_frames <= capacity
    assert sum(outcome.stats.exchange_tuples.values()) >= 400
    assert outcome.stats.frames_out > capacity


def test_failing_producer_releases_blocked_consumers(tmp_path, make_config):
    root = _big_collection(tmp_path)
    config = make_config(root, partitions=2, workers="thread", frame_size=4096, queue_frames=1, pushdown=False)
    with pytest.raises(ExecutionError) as info:
        run_query('count(for $r in collection("/sensors")/dataCollection/data return $r)', config)
    assert isinstance(info.value.__cause__, FrameOverflow)
    assert info.value.partition == 0


def test_queue_frames_must_be_positive(make_config):
    with pytest.raises(ConfigError):
        make_config(queue_frames=0).validate()
