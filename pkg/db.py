"""
Database helpers — SQLAlchemy engine and query wrappers for the benchmark
history the bench command records and the dashboard charts.
"""

from __future__ import annotations

import logging
import os
from functools import lru_cache
from pathlib import Path

import pandas as pd
from sqlalchemy import Column, DateTime, Float, Integer, MetaData, String, Table, Text, create_engine, text
from sqlalchemy.engine import Engine

log = logging.getLogger(__name__)

RESULT_COLUMNS = ("query", "partitions", "mean_ms", "result_hash", "plan_hash")

_metadata = MetaData()

bench_results = Table(
    "bench_results",
    _metadata,
    Column("id", Integer, primary_key=True, autoincrement=True),
    Column("run_id", String(64), nullable=False),
    Column("recorded_at", DateTime, nullable=False),
    Column("mode", String(16), nullable=False),
    Column("data_root", Text),
    Column("query", String(128), nullable=False),
    Column("partitions", Integer, nullable=False),
    Column("mean_ms", Float),
    Column("result_hash", String(32)),
    Column("plan_hash", String(32)),
    Column("error", Text),
)


def _get_url() -> str:
    """XQFLOW_DB_URL, or a SQLite file next to the settings."""
    url = os.getenv("XQFLOW_DB_URL")
    if url:
        return url
    path = Path.home() / ".xqflow" / "bench.db"
    path.parent.mkdir(parents=True, exist_ok=True)
    return f"sqlite:///{path}"


@lru_cache(maxsize=None)
def get_engine(url: str | None = None) -> Engine:
    """
    Return a SQLAlchemy engine with the history table in place.  Cached so
    a single pool is reused across dashboard re-runs and bench cells.
    """
    engine = create_engine(url or _get_url(), pool_pre_ping=True)
    _metadata.create_all(engine)
    return engine


def run_query(sql: str, params: dict | None = None, url: str | None = None) -> pd.DataFrame:
    """Execute *sql* and return the result set as a DataFrame."""
    engine = get_engine(url)
    try:
        with engine.connect() as conn:
            return pd.read_sql_query(text(sql), conn, params=params)
    except Exception as exc:
        # If the pool went stale, dispose and retry once
        engine.dispose()
        get_engine.cache_clear()
        engine = get_engine(url)
        try:
            with engine.connect() as conn:
                return pd.read_sql_query(text(sql), conn, params=params)
        except Exception:
            raise exc


# ── Writes ───────────────────────────────────────────────────────────

def record_results(
    report: pd.DataFrame,
    run_id: str,
    mode: str,
    data_root: str,
    url: str | None = None,
) -> int:
    """Append one bench report; returns the number of rows written."""
    if report.empty:
        return 0
    rows = report.reindex(columns=[*RESULT_COLUMNS, "error"]).assign(
        run_id=run_id,
        recorded_at=pd.Timestamp.now(tz="UTC").tz_localize(None),
        mode=mode,
        data_root=data_root,
    )
    rows.to_sql("bench_results", get_engine(url), if_exists="append", index=False)
    log.info("recorded %d bench row(s) for run %s", len(rows), run_id)
    return len(rows)


# ── Reads ────────────────────────────────────────────────────────────

def fetch_runs(url: str | None = None) -> pd.DataFrame:
    """One row per bench run, newest first."""
    return run_query(
        """
        SELECT run_id,
               MIN(recorded_at)            AS recorded_at,
               MIN(mode)                   AS mode,
               MIN(data_root)              AS data_root,
               COUNT(DISTINCT query)       AS queries,
               MAX(partitions)             AS max_partitions,
               SUM(CASE WHEN error IS NOT NULL THEN 1 ELSE 0 END) AS errors
          FROM bench_results
         GROUP BY run_id
         ORDER BY MIN(recorded_at) DESC
        """,
        url=url,
    )


def fetch_results(run_id: str | None = None, url: str | None = None) -> pd.DataFrame:
    """Report rows for one run, or for every run when ``run_id`` is None."""
    sql = """
        SELECT run_id, recorded_at, mode, query, partitions, mean_ms,
               result_hash, plan_hash, error
          FROM bench_results
    """
    params: dict | None = None
    if run_id is not None:
        sql += " WHERE run_id = :run_id"
        params = {"run_id": run_id}
    sql += " ORDER BY recorded_at, query, partitions"
    return run_query(sql, params, url=url)


def fetch_query_history(query: str, url: str | None = None) -> pd.DataFrame:
    """Every timing recorded for ``query``, for trend charts."""
    return run_query(
        """
        SELECT run_id, recorded_at, mode, partitions, mean_ms, plan_hash
          FROM bench_results
         WHERE query = :query
           AND error IS NULL
         ORDER BY recorded_at, partitions
        """,
        {"query": query},
        url=url,
    )
