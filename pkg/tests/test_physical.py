"""
Physical selection — exchanges, join algorithms, aggregate phases.
"""

from __future__ import annotations

import pytest

import xdm
from compiler import compile_query
from compiler.algebra import Const, LogicalPlan, ets, join
from compiler.physical import AggPhase, ExchangeKind, PhysKind, select_physical, walk_physical
from errors import ConfigError, PhysicalPlanError
from settings import RunConfig
from xml_ingest import Catalog

JOIN = (
    'for $r in collection("/ann-books")/bookstore/book '
    'for $s in collection("/joe-books")/bookstore/book '
    'where $r/title eq $s/title return $r'
)
THETA_JOIN = (
    'for $r in collection("/ann-books")/bookstore/book '
    'for $s in collection("/joe-books")/bookstore/book '
    'where $r/year lt $s/year return $r'
)
COUNT = 'count(for $x in collection("/books")/bookstore/book return $x)'


def _kinds(plan) -> list[PhysKind]:
    return [op.kind for op in plan.operators()]


def test_scan_is_partitioned_and_merged_once(library):
    compiled = compile_query('collection("/books")/bookstore/book', Catalog(library, 4))
    plan = compiled.physical
    assert plan.partitions == 4
    (scan,) = [op for op in plan.operators() if op.kind is PhysKind.PARTITIONED_SCAN]
    assert scan.degree == 4 and scan.path == ("bookstore", "book")
    (exchange,) = [op for op in plan.operators() if op.kind is PhysKind.EXCHANGE]
    assert exchange.exchange is ExchangeKind.MERGE_TO_ONE and exchange.degree == 1
    assert plan.root.kind is PhysKind.RESULT_SINK


def test_equi_join_becomes_hybrid_hash_join(library):
    plan = compile_query(JOIN, Catalog(library, 3)).physical
    assert plan.count(PhysKind.HYBRID_HASH_JOIN) == 1
    assert plan.count(PhysKind.NESTED_LOOP_JOIN) == 0
    (hhj,) = [op for op in plan.operators() if op.kind is PhysKind.HYBRID_HASH_JOIN]
    assert len(hhj.join_keys) == 1
    assert hhj.degree == 3
    assert [i.exchange for i in hhj.inputs] == [ExchangeKind.HASH_PARTITION] * 2
    # ann-books holds fewer bytes than joe-books and is the build side
    build = walk_physical(hhj.inputs[hhj.build])
    assert {op.collection for op in build if op.collection} == {"/ann-books"}


def test_single_partition_join_needs_no_repartitioning(library):
    plan = compile_query(JOIN, Catalog(library, 1)).physical
    (hhj,) = [op for op in plan.operators() if op.kind is PhysKind.HYBRID_HASH_JOIN]
    assert [i.exchange for i in hhj.inputs] == [ExchangeKind.ONE_TO_ONE] * 2


def test_theta_join_becomes_nested_loop_with_broadcast(library):
    plan = compile_query(THETA_JOIN, Catalog(library, 2)).physical
    assert plan.count(PhysKind.HYBRID_HASH_JOIN) == 0
    (nlj,) = [op for op in plan.operators() if op.kind is PhysKind.NESTED_LOOP_JOIN]
    assert nlj.inputs[nlj.build].exchange is ExchangeKind.BROADCAST
    assert nlj.degree == 2


def test_two_step_aggregate_phases(library):
    plan = compile_query(COUNT, Catalog(library, 4)).physical
    aggregates = [op for op in plan.operators() if op.kind is PhysKind.STREAMING_AGGREGATE]
    phases = sorted(op.phase.value for op in aggregates)
    assert phases == [AggPhase.GLOBAL.value, AggPhase.LOCAL.value]
    (local,) = [op for op in aggregates if op.phase is AggPhase.LOCAL]
    (glob,) = [op for op in aggregates if op.phase is AggPhase.GLOBAL]
    assert local.degree == 4 and glob.degree == 1
    assert local.expressions[0].name == "count"
    assert glob.expressions[0].name == "sum"


def test_doc_query_runs_on_one_partition():
    plan = compile_query('doc("book.xml")/bookstore/book', Catalog(None, 4)).physical
    assert PhysKind.PARTITIONED_SCAN not in _kinds(plan)
    assert all(op.degree == 1 for op in plan.operators() if op.kind is not PhysKind.EXCHANGE)


def test_dump_stages(library):
    compiled = compile_query(JOIN, Catalog(library, 2))
    assert compiled.dump("initial").startswith("DISTRIBUTE-RESULT")
    assert "JOIN" in compiled.dump("logical")
    assert "HYBRID-HASH-JOIN" in compiled.dump("physical")
    assert len(compiled.plan_hash) == 12
    with pytest.raises(ValueError):
        compiled.dump("final")


def test_plan_root_must_distribute_results():
    plan = LogicalPlan(join(Const(xdm.boolean(True)), ets(), ets()))
    with pytest.raises(PhysicalPlanError):
        select_physical(plan, Catalog(None, 1))


def test_result_sink_reads_a_single_partition(library):
    plan = compile_query(JOIN, Catalog(library, 2)).physical
    assert plan.root.input.kind is PhysKind.EXCHANGE
    assert plan.root.input.degree == 1


def test_config_partitions_must_match_the_catalog(library):
    catalog = Catalog(library, 2)
    plan = compile_query(JOIN, catalog).optimized.plan
    assert select_physical(plan, catalog, RunConfig(partitions=2)).partitions == 2
    with pytest.raises(ConfigError):
        select_physical(plan, catalog, RunConfig(partitions=3))
