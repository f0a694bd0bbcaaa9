"""
Query processor — one entry point for running a query text under a
RunConfig with either engine, shared by the CLI, the bench and the
dashboard.
"""

from __future__ import annotations

import logging
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from compiler import CompiledQuery, compile_query
from oracle import run_naive
from runtime import execute, serialize_result
from runtime.frames import RuntimeStats
from runtime.serialize import serialize_item
from settings import RunConfig
from xdm import XDMSequence
from xml_ingest import Catalog

log = logging.getLogger(__name__)


@dataclass
class QueryOutcome:
    result: XDMSequence
    compiled: CompiledQuery | None
    elapsed_ms: float
    stats: RuntimeStats = field(default_factory=RuntimeStats)

    @property
    def text(self) -> str:
        return serialize_result(self.result)


def open_catalog(config: RunConfig) -> Catalog:
    return Catalog(config.data_root or None, config.partitions)


def read_query(source: str) -> str:
    """A query file's contents, or ``source`` itself when it is not a path to one."""
    path = Path(source)
    if source.endswith(".xq") or (len(source) < 4096 and "\n" not in source and path.is_file()):
        return path.read_text(encoding="utf-8")
    return source


def run_query(text: str, config: RunConfig, compiled: CompiledQuery | None = None) -> QueryOutcome:
    config.validate()
    catalog = open_catalog(config)
    started = time.perf_counter()
    stats = RuntimeStats()
    if config.engine == "naive":
        result = run_naive(text, catalog)
    else:
        compiled = compiled or compile_query(text, catalog, pushdown=config.pushdown, config=config)
        result = execute(compiled.physical, catalog, config, stats)
    elapsed = (time.perf_counter() - started) * 1000
    log.info("%s engine: %d item(s) in %.1f ms", config.engine, len(result), elapsed)
    return QueryOutcome(result, compiled, elapsed, stats)


def normalized(result: XDMSequence) -> list[str]:
    """Serialized items, sorted, for comparing results whose order is implementation-defined."""
    return sorted(serialize_item(item) for item in result)


@dataclass(frozen=True)
class EngineDiff:
    parallel: QueryOutcome
    naive: QueryOutcome

    @property
    def agree(self) -> bool:
        return normalized(self.parallel.result) == normalized(self.naive.result)

    def missing(self) -> list[str]:
        """Items only the naive engine returns, counted as a multiset."""
        return sorted((Counter(normalized(self.naive.result)) - Counter(normalized(self.parallel.result))).elements())

    def extra(self) -> list[str]:
        return sorted((Counter(normalized(self.parallel.result)) - Counter(normalized(self.naive.result))).elements())


def compare_engines(text: str, config: RunConfig) -> EngineDiff:
    parallel = run_query(text, config.with_(engine="parallel"))
    naive = run_query(text, config.with_(engine="naive"))
    return EngineDiff(parallel, naive)
