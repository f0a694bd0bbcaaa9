"""
Benchmark harness, history database, display helpers and settings.
"""

from __future__ import annotations

import json

import pandas as pd
import pytest

import settings
from bench import WARMUP_RUNS, load_queries, render_table, report_tsv, run_bench, scale_root, speedup_table
from db import RESULT_COLUMNS, fetch_query_history, fetch_results, fetch_runs, record_results
from errors import ConfigError
from settings import RunConfig, load_settings, save_settings
from timing import format_bytes, format_ms, format_speedup, speedup

BOOKS = 'collection("/books")/bookstore/book/title'


# ── Bench ────────────────────────────────────────────────────────────

def test_run_bench_reports_every_cell(library, make_config):
    report = run_bench({"titles": BOOKS}, [1, 2], make_config(library), repetitions=1)
    assert list(report["partitions"]) == [1, 2]
    assert report["error"].isna().all()
    assert report["result_hash"].nunique() == 1
    assert (report["mean_ms"] > 0).all()
    assert len(report["plan_hash"].iloc[0]) == 12


def test_failed_cells_do_not_stop_the_matrix(library, make_config):
    report = run_bench({"missing": 'collection("/nope")/a', "titles": BOOKS}, [1], make_config(library), 1)
    failed = report.set_index("query")["error"]
    assert failed["missing"] and pd.isna(failed["titles"])
    assert "missing" in render_table(report)


def test_report_tsv():
    report = pd.DataFrame(
        [("q", 1, 10.0, "aa", "bb", None)], columns=[*RESULT_COLUMNS, "error"],
    )
    assert report_tsv(report).splitlines() == ["\t".join(RESULT_COLUMNS), "q\t1\t10.0\taa\tbb"]


def test_speedup_table():
    report = pd.DataFrame(
        [("q", 1, 100.0, "", "", None), ("q", 2, 50.0, "", "", None), ("q", 4, None, "", "", "boom")],
        columns=[*RESULT_COLUMNS, "error"],
    )
    table = speedup_table(report)
    assert list(table["speedup"]) == [1.0, 2.0]
    assert "2.00×" in render_table(report)


def test_load_queries():
    queries = load_queries()
    assert "highest_temperature" in queries and "bookstore" in queries
    assert list(load_queries(["bookstore"])) == ["bookstore"]


def test_scale_root():
    assert scale_root("/data", 4).endswith("scale-4")
    assert WARMUP_RUNS == 2


# ── History database ─────────────────────────────────────────────────

def test_record_and_fetch(tmp_path):
    url = f"sqlite:///{tmp_path / 'bench.db'}"
    report = pd.DataFrame(
        [("q", 1, 20.0, "h", "p", None), ("q", 2, 12.0, "h", "p", None), ("r", 1, None, "", "", "boom")],
        columns=[*RESULT_COLUMNS, "error"],
    )
    assert record_results(report, "run-1", "speed-up", "/data", url=url) == 3
    runs = fetch_runs(url=url)
    assert list(runs["run_id"]) == ["run-1"]
    assert int(runs["errors"].iloc[0]) == 1
    assert len(fetch_results("run-1", url=url)) == 3
    history = fetch_query_history("q", url=url)
    assert list(history["partitions"]) == [1, 2]
    assert fetch_query_history("r", url=url).empty


def test_record_empty_report(tmp_path):
    empty = pd.DataFrame(columns=[*RESULT_COLUMNS, "error"])
    assert record_results(empty, "run", "speed-up", "", url=f"sqlite:///{tmp_path / 'x.db'}") == 0


# ── Display helpers ──────────────────────────────────────────────────

@pytest.mark.parametrize("ms, text", [(850.24, "850.2 ms"), (12410, "12.41 s")])
def test_format_ms(ms, text):
    assert format_ms(ms) == text


@pytest.mark.parametrize("count, text", [(512, "512 B"), (2048, "2.0 KiB"), (3 * 1024 ** 2, "3.0 MiB")])
def test_format_bytes(count, text):
    assert format_bytes(count) == text


def test_speedup():
    assert speedup(100, 25) == 4.0
    assert speedup(0, 25) is None
    assert format_speedup(None) == "—"
    assert format_speedup(1.5) == "1.50×"


# ── Settings ─────────────────────────────────────────────────────────

def test_defaults_are_written(isolated_settings):
    data = load_settings()
    assert data["partitions"] == 1
    assert json.loads(isolated_settings.read_text())["engine"] == "parallel"


def test_missing_keys_are_back_filled(isolated_settings):
    isolated_settings.write_text(json.dumps({"partitions": 3}))
    data = load_settings()
    assert data["partitions"] == 3 and data["frame_size"] == 65536


def test_save_validates(isolated_settings):
    with pytest.raises(ConfigError):
        save_settings({**load_settings(), "frame_size": 100})
    save_settings({**load_settings(), "partitions": 8})
    assert settings.get("partitions") == 8


def test_overrides_beat_the_file(isolated_settings):
    isolated_settings.write_text(json.dumps({"partitions": 3, "workers": "thread"}))
    config = RunConfig.from_settings(partitions=5, workers=None)
    assert config.partitions == 5 and config.workers == "thread"


@pytest.mark.parametrize("changes", [
    {"partitions": 0}, {"frame_size": 1024}, {"memory_budget": 0}, {"engine": "fast"}, {"workers": "gpu"},
])
def test_invalid_configs(changes):
    with pytest.raises(ConfigError):
        RunConfig().with_(**changes).validate()


def test_unknown_settings_keys_are_ignored():
    config = RunConfig.from_settings({"partitions": 2, "timezone": "UTC"})
    assert config.as_dict()["partitions"] == 2
