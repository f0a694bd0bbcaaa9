"""
Benchmark harness — times each query at each partition count, discarding
warm-up runs, and builds the tab-separated report and the speed-up table.
"""

from __future__ import annotations

import hashlib
import logging
import statistics
from pathlib import Path

import pandas as pd
from tabulate import tabulate

from db import RESULT_COLUMNS
from errors import XQFlowError
from processor import run_query
from settings import RunConfig
from timing import format_ms, format_speedup, speedup

log = logging.getLogger(__name__)

WARMUP_RUNS = 2
QUERY_DIR = Path(__file__).resolve().parent / "queries"


def load_queries(names: list[str] | None = None, directory: Path = QUERY_DIR) -> dict[str, str]:
    """Query texts by name; ``names`` may be query names or paths to ``.xq`` files."""
    if not names:
        return {p.stem: p.read_text(encoding="utf-8") for p in sorted(directory.glob("*.xq"))}
    out: dict[str, str] = {}
    for name in names:
        path = Path(name)
        if not path.is_file():
            path = directory / f"{name}.xq"
        out[path.stem] = path.read_text(encoding="utf-8")
    return out


def result_hash(text: str) -> str:
    return hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


def scale_root(data_root: str, partitions: int) -> str:
    """Corpus directory holding the proportional data for ``partitions`` in scale-up runs."""
    return str(Path(data_root) / f"scale-{partitions}")


def bench_cell(name: str, text: str, config: RunConfig, repetitions: int) -> dict:
    """One (query, partitions) cell: ``repetitions`` + warm-up runs, mean of the kept ones."""
    times: list[float] = []
    outcome = None
    for i in range(repetitions + WARMUP_RUNS):
        outcome = run_query(text, config)
        if i >= WARMUP_RUNS:
            times.append(outcome.elapsed_ms)
    mean_ms = statistics.fmean(times)
    log.info("bench %s @ %d partition(s): %.1f ms", name, config.partitions, mean_ms)
    return {
        "query": name,
        "partitions": config.partitions,
        "mean_ms": round(mean_ms, 3),
        "result_hash": result_hash(outcome.text),
        "plan_hash": outcome.compiled.plan_hash if outcome.compiled else "",
        "error": None,
    }


def run_bench(
    queries: dict[str, str],
    partitions: list[int],
    config: RunConfig,
    repetitions: int = 3,
    scale_up: bool = False,
) -> pd.DataFrame:
    """
    Every query at every partition count.  A failing cell is reported with
    its error and the matrix continues.
    """
    rows = []
    for name, text in queries.items():
        for p in partitions:
            cell_config = config.with_(partitions=p)
            if scale_up:
                cell_config = cell_config.with_(data_root=scale_root(config.data_root, p))
            try:
                rows.append(bench_cell(name, text, cell_config, repetitions))
            except XQFlowError as exc:
                log.warning("bench %s @ %d partition(s) failed: %s", name, p, exc)
                rows.append({
                    "query": name, "partitions": p, "mean_ms": None,
                    "result_hash": "", "plan_hash": "", "error": str(exc),
                })
    return pd.DataFrame(rows, columns=[*RESULT_COLUMNS, "error"])


def report_tsv(report: pd.DataFrame) -> str:
    """The machine-readable report: one tab-separated line per cell, with a header."""
    return report.to_csv(sep="\t", index=False, columns=list(RESULT_COLUMNS), na_rep="")


def speedup_table(report: pd.DataFrame) -> pd.DataFrame:
    """
    Mean time per query and partition count, with the speed-up against the
    smallest partition count measured for that query.
    """
    ok = report[report["error"].isna() & report["mean_ms"].notna()]
    if ok.empty:
        return pd.DataFrame(columns=["query", "partitions", "mean_ms", "speedup"])
    base = ok.sort_values("partitions").groupby("query")["mean_ms"].first()
    table = ok[["query", "partitions", "mean_ms"]].copy()
    table["speedup"] = [speedup(base[q], ms) for q, ms in zip(table["query"], table["mean_ms"])]
    return table.reset_index(drop=True)


def render_table(report: pd.DataFrame) -> str:
    """Terminal table of the speed-up view, plus any failed cells."""
    table = speedup_table(report)
    body = tabulate(
        [
            (row.query, row.partitions, format_ms(row.mean_ms), format_speedup(row.speedup))
            for row in table.itertuples()
        ],
        headers=["query", "partitions", "mean", "speed-up"],
        tablefmt="simple",
    )
    failed = report[report["error"].notna()]
    if not failed.empty:
        body += "\n\n" + tabulate(
            failed[["query", "partitions", "error"]].values.tolist(),
            headers=["query", "partitions", "error"],
        )
    return body
