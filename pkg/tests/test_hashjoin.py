"""
Join algorithms — hybrid hash join against a naive join, with and without
spilling, plus key canonicalization.
"""

from __future__ import annotations

from collections import Counter

import numpy as np
import pytest

import xdm
from errors import XQueryTypeError
from oracle import value_comparison
from runtime.frames import RuntimeStats
from runtime.hashjoin import FANOUT, canonical_key, hybrid_hash_join, nested_loop_join, stable_hash


def _rows(rng: np.random.Generator, count: int, keys: int, key_var: int, tag_var: int, tag: str) -> list[dict]:
    return [
        {key_var: (xdm.integer(int(k)),), tag_var: (xdm.string(f"{tag}{i}"),)}
        for i, k in enumerate(rng.integers(keys, size=count))
    ]


def _pairs(rows) -> Counter:
    return Counter((r[2][0].value, r[4][0].value) for r in rows)


def _naive(build, stream) -> Counter:
    return _pairs(
        {**b, **p} for p in stream for b in build if b[1][0].value == p[3][0].value
    )


def _join(build, stream, budget, scratch, stats, residual=lambda row: True):
    return list(hybrid_hash_join(
        build, stream,
        build_key=lambda r: canonical_key(r[1]),
        stream_key=lambda r: canonical_key(r[3]),
        memory_budget=budget, scratch_dir=str(scratch), residual=residual, stats=stats,
    ))


def _mixed_key(rng: np.random.Generator) -> tuple:
    """Integer, double, decimal, string, untyped, empty, NaN or negative-zero keys over a small range."""
    k = int(rng.integers(0, 5))
    kind = int(rng.integers(0, 8))
    if kind == 0:
        return (xdm.integer(k),)
    if kind == 1:
        return (xdm.double(float(k)),)
    if kind == 2:
        return (xdm.decimal(f"{k}.5" if k % 2 else str(k)),)
    if kind == 3:
        return (xdm.string(f"k{k}"),)
    if kind == 4:
        return (xdm.untyped(f"k{k}"),)
    if kind == 5:
        return ()
    if kind == 6:
        return (xdm.double(float("nan")),)
    return (xdm.double(-float(k)) if k else xdm.double(-0.0),)


def _mixed_rows(rng, count, key_var, tag_var, tag):
    return [{key_var: _mixed_key(rng), tag_var: (xdm.string(f"{tag}{i}"),)} for i in range(count)]


def _value_eq(row) -> bool:
    try:
        return xdm.effective_boolean_value(value_comparison("eq", row[1], row[3]))
    except XQueryTypeError:
        return False


@pytest.mark.parametrize("seed", range(200))
def test_hash_join_equals_nested_loop_join(seed, tmp_path):
    rng = np.random.default_rng(seed)
    build = _mixed_rows(rng, int(rng.integers(0, 60)), 1, 2, "b")
    stream = _mixed_rows(rng, int(rng.integers(0, 60)), 3, 4, "p")
    budget = 600 if seed % 2 else 1 << 30
    stats = RuntimeStats()
    hashed = _pairs(_join(build, stream, budget, tmp_path, stats))
    looped = _pairs(nested_loop_join(stream, build, _value_eq))
    assert hashed == looped
    assert not list(tmp_path.glob("xqflow-spill-*"))


@pytest.mark.parametrize("seed", range(5))
def test_spilling_join_matches_naive(seed, tmp_path):
    rng = np.random.default_rng(seed)
    build = _rows(rng, 300, 60, 1, 2, "b")
    stream = _rows(rng, 300, 60, 3, 4, "p")
    stats = RuntimeStats()
    joined = _join(build, stream, 1000, tmp_path, stats)
    assert _pairs(joined) == _naive(build, stream)
    assert stats.spill_files > 0 and stats.spilled_bytes > 0
    assert not list(tmp_path.glob("xqflow-spill-*"))


def test_residual_filters_matches(tmp_path):
    build = [{1: (xdm.integer(1),), 2: (xdm.string("b"),)}]
    stream = [{3: (xdm.integer(1),), 4: (xdm.string(t),)} for t in ("keep", "drop")]
    joined = _join(build, stream, 1 << 20, tmp_path, RuntimeStats(), residual=lambda r: r[4][0].value == "keep")
    assert _pairs(joined) == Counter({("b", "keep"): 1})


def test_empty_keys_never_match(tmp_path):
    build = [{1: (), 2: (xdm.string("b"),)}]
    stream = [{3: (), 4: (xdm.string("p"),)}]
    assert _join(build, stream, 1 << 20, tmp_path, RuntimeStats()) == []


def test_nested_loop_join():
    outer = [{3: (xdm.integer(i),)} for i in range(4)]
    inner = [{1: (xdm.integer(i),)} for i in range(4)]
    joined = list(nested_loop_join(outer, inner, lambda r: r[1][0].value < r[3][0].value))
    assert len(joined) == 6
    assert all(set(r) == {1, 3} for r in joined)


# ── Keys ─────────────────────────────────────────────────────────────

def test_numeric_keys_compare_across_types():
    assert canonical_key((xdm.integer(3),)) == canonical_key((xdm.double(3.0),)) == canonical_key((xdm.decimal("3.0"),))


def test_untyped_and_string_keys_compare_as_strings():
    assert canonical_key((xdm.untyped("x"),)) == canonical_key((xdm.string("x"),))
    assert canonical_key((xdm.untyped("1"),)) != canonical_key((xdm.integer(1),))


def test_nan_and_empty_have_no_key():
    assert canonical_key(()) is None
    assert canonical_key((xdm.double(float("nan")),)) is None


def test_sequence_key_is_a_type_error():
    with pytest.raises(XQueryTypeError):
        canonical_key((xdm.integer(1), xdm.integer(2)))


def test_stable_hash_is_deterministic_and_salted():
    key = (("str", "Harry Potter"),)
    assert stable_hash(key) == stable_hash(key)
    assert stable_hash(key, 0) != stable_hash(key, 1)
    buckets = Counter(stable_hash((("num", float(i)),)) % FANOUT for i in range(800))
    assert len(buckets) == FANOUT


def test_signed_zeros_share_a_key_and_a_bucket():
    zero, negative = canonical_key((xdm.double(0.0),)), canonical_key((xdm.double(-0.0),))
    assert zero == negative == canonical_key((xdm.integer(0),))
    for level in range(3):
        for ways in (2, 4, FANOUT):
            assert stable_hash((zero,), level) % ways == stable_hash((negative,), level) % ways


def test_numeric_kinds_hash_alike():
    for value in (1, 7, 1 << 40):
        hashes = {
            stable_hash((canonical_key((item,)),))
            for item in (xdm.integer(value), xdm.decimal(str(value)), xdm.double(float(value)))
        }
        assert len(hashes) == 1


def test_signed_zeros_join_after_spilling(tmp_path):
    build = [{1: (xdm.double(0.0),), 2: (xdm.string(f"b{i}"),)} for i in range(40)]
    build += [{1: (xdm.integer(i),), 2: (xdm.string(f"x{i}"),)} for i in range(1, 40)]
    stream = [{3: (xdm.double(-0.0),), 4: (xdm.string("p"),)}]
    stats = RuntimeStats()
    joined = _join(build, stream, 200, tmp_path, stats)
    assert len(joined) == 40
    assert stats.spill_files > 0
