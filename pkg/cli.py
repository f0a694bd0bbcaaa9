"""
Command line — run queries, dump plans, compare engines, generate the
weather corpus and benchmark partition scaling.

    python cli.py run -q queries/bookstore.xq --data-root queries
    python cli.py run -q queries/highest_temperature.xq --data-root data --partitions 4
    python cli.py diff -q queries/specific_day_readings.xq --data-root data --partitions 2
    python cli.py datagen --out data --stations 40 --days 365
    python cli.py bench --data-root data --partitions 1,2,4 --record

Exit codes: 0 success, 1 engines disagree (diff), 2 syntax error,
3 static/type error, 4 runtime or I/O error.
"""

from __future__ import annotations

import datetime as dt
import logging
import sys
import uuid

import click

import settings
from errors import XQFlowError
from settings import ENGINES, WORKER_MODES, RunConfig

log = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _setup_logging(level: str | None) -> None:
    level = (level or settings.get("log_level") or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format=LOG_FORMAT, stream=sys.stderr)


def _fail(exc: XQFlowError) -> None:
    click.echo(f"error: {exc}", err=True)
    sys.exit(exc.exit_code)


def _partition_list(value: str) -> list[int]:
    try:
        counts = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")
    if not counts or any(c < 1 for c in counts):
        raise click.BadParameter("partition counts must be positive")
    return counts


def _config(**flags) -> RunConfig:
    return RunConfig.from_settings(**flags).validate()


_engine_options = [
    click.option("-q", "--query", "query", required=True, help="Query text or path to a .xq file."),
    click.option("--data-root", type=click.Path(file_okay=False), default=None,
                 help="Directory that collection and doc URIs resolve under."),
    click.option("--partitions", type=click.IntRange(min=1), default=None),
    click.option("--frame-size", type=click.IntRange(min=settings.MIN_FRAME_SIZE), default=None),
    click.option("--memory-budget", type=click.IntRange(min=1), default=None,
                 help="Hash join memory in bytes before spilling."),
    click.option("--scratch", "scratch_dir", type=click.Path(file_okay=False), default=None),
    click.option("--workers", type=click.Choice(WORKER_MODES), default=None),
    click.option("--queue-frames", type=click.IntRange(min=1), default=None,
                 help="Frames an exchange queue holds before its producers block."),
    click.option("--no-pushdown", is_flag=True, help="Disable the child-path pushdown rule."),
    click.option("--log-level", default=None,
                 type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False)),
]


def engine_options(fn):
    for option in reversed(_engine_options):
        fn = option(fn)
    return fn


@click.group()
def cli() -> None:
    """XQFlow: a partitioned XQuery processor."""


# ── run ──────────────────────────────────────────────────────────────

@cli.command()
@engine_options
@click.option("--engine", type=click.Choice(ENGINES), default=None)
@click.option("--dump-plan", "dump", multiple=True,
              type=click.Choice(["initial", "logical", "physical"]),
              help="Print the plan at this stage before the result (repeatable).")
def run(query, data_root, partitions, frame_size, memory_budget, scratch_dir, workers,
        queue_frames, no_pushdown, log_level, engine, dump) -> None:
    """Run one query and print its result."""
    from compiler import compile_query
    from processor import open_catalog, read_query, run_query

    _setup_logging(log_level)
    try:
        config = _config(
            data_root=data_root, partitions=partitions, frame_size=frame_size,
            memory_budget=memory_budget, scratch_dir=scratch_dir, workers=workers,
            queue_frames=queue_frames,
            engine=engine, pushdown=False if no_pushdown else None, log_level=log_level,
        )
        text = read_query(query)
        compiled = None
        if dump:
            compiled = compile_query(text, open_catalog(config), pushdown=config.pushdown)
            for stage in dump:
                click.echo(compiled.dump(stage))
                click.echo()
        outcome = run_query(text, config, compiled)
    except XQFlowError as exc:
        _fail(exc)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)
    click.echo(outcome.text)


# ── diff ─────────────────────────────────────────────────────────────

@cli.command()
@engine_options
def diff(query, data_root, partitions, frame_size, memory_budget, scratch_dir, workers,
         queue_frames, no_pushdown, log_level) -> None:
    """Run both engines; exit 0 when results agree after order normalization, 1 otherwise."""
    from processor import compare_engines, read_query

    _setup_logging(log_level)
    try:
        config = _config(
            data_root=data_root, partitions=partitions, frame_size=frame_size,
            memory_budget=memory_budget, scratch_dir=scratch_dir, workers=workers,
            queue_frames=queue_frames,
            pushdown=False if no_pushdown else None, log_level=log_level,
        )
        result = compare_engines(read_query(query), config)
    except XQFlowError as exc:
        _fail(exc)
    if result.agree:
        click.echo(f"agree: {len(result.parallel.result)} item(s)")
        sys.exit(0)
    click.echo(f"disagree: parallel {len(result.parallel.result)} item(s), "
               f"naive {len(result.naive.result)} item(s)")
    for item in result.missing()[:10]:
        click.echo(f"- {item}")
    for item in result.extra()[:10]:
        click.echo(f"+ {item}")
    sys.exit(1)


# ── datagen ──────────────────────────────────────────────────────────

@cli.command()
@click.option("--out", type=click.Path(file_okay=False), required=True)
@click.option("--seed", type=int, default=42, show_default=True)
@click.option("--stations", type=click.IntRange(min=1), default=12, show_default=True)
@click.option("--days", type=click.IntRange(min=0), default=60, show_default=True)
@click.option("--start", type=click.DateTime(formats=["%Y-%m-%d"]), default="1999-12-01", show_default=True)
@click.option("--partitions", type=click.IntRange(min=1), default=4, show_default=True,
              help="Chunk subdirectories per collection.")
@click.option("--records-per-file", type=click.IntRange(min=1), default=200, show_default=True)
@click.option("--scale-up", "scale_up", default=None,
              help="Comma-separated partition counts; writes scale-<p> corpora with p times the stations.")
@click.option("--log-level", default=None)
def datagen(out, seed, stations, days, start, partitions, records_per_file, scale_up, log_level) -> None:
    """Generate the weather corpus and its manifest."""
    from pathlib import Path

    from datagen import GenSpec, generate
    from bench import scale_root

    _setup_logging(log_level)
    spec = GenSpec(
        seed=seed, station_count=stations, days=days, start=start.date(),
        partitions=partitions, records_per_file=records_per_file,
    )
    try:
        if scale_up:
            for p in _partition_list(scale_up):
                entries = generate(spec.scaled(p), scale_root(out, p))
                click.echo(f"scale-{p}: {entries['records']} records")
        else:
            entries = generate(spec, Path(out))
            click.echo(f"{entries['records']} records, {entries['stations']} stations → {out}")
    except XQFlowError as exc:
        _fail(exc)


# ── bench ────────────────────────────────────────────────────────────

@cli.command()
@click.option("--data-root", type=click.Path(file_okay=False), required=True)
@click.option("--query", "-q", "queries", multiple=True,
              help="Query name under queries/ or path to a .xq file (repeatable; default all).")
@click.option("--partitions", "partition_list", default="1,2,4", show_default=True)
@click.option("--repetitions", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--workers", type=click.Choice(WORKER_MODES), default=None)
@click.option("--scale-up", is_flag=True, help="Use <data-root>/scale-<p> for each partition count.")
@click.option("--record", is_flag=True, help="Store the report in the history database.")
@click.option("--table", is_flag=True, help="Print a speed-up table instead of TSV.")
@click.option("--log-level", default=None)
def bench(data_root, queries, partition_list, repetitions, workers, scale_up, record, table, log_level) -> None:
    """Time queries across partition counts (mean of the runs after two warm-ups)."""
    from bench import load_queries, render_table, report_tsv, run_bench

    _setup_logging(log_level)
    try:
        config = _config(data_root=data_root, workers=workers, engine="parallel")
        texts = load_queries(list(queries) or None)
        report = run_bench(texts, _partition_list(partition_list), config, repetitions, scale_up)
    except XQFlowError as exc:
        _fail(exc)
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(4)
    click.echo(render_table(report) if table else report_tsv(report), nl=False)
    if table:
        click.echo()
    if record:
        from db import record_results

        run_id = f"{dt.datetime.now(dt.timezone.utc):%Y%m%dT%H%M%S}-{uuid.uuid4().hex[:6]}"
        written = record_results(report, run_id, "scale-up" if scale_up else "speed-up", data_root)
        click.echo(f"recorded {written} row(s) as run {run_id}", err=True)
    if report["error"].notna().any():
        sys.exit(4)


if __name__ == "__main__":
    cli()
