"""
Page 1 — Benchmark Runs
Lists recorded bench runs and the per-cell timings of the selected run.
"""

import streamlit as st
import pandas as pd
from db import fetch_runs, fetch_results
from bench import speedup_table
from timing import format_ms, format_speedup


@st.cache_data(ttl=60, show_spinner=False)
def _runs() -> pd.DataFrame:
    return fetch_runs()


@st.cache_data(ttl=60, show_spinner=False, max_entries=50)
def _results(run_id: str) -> pd.DataFrame:
    return fetch_results(run_id)


def page_dashboard() -> None:
    st.header("Benchmark Runs")

    try:
        runs = _runs()
    except Exception:
        import traceback
        traceback.print_exc()
        st.error("Failed to load the benchmark history. Check server logs.")
        return

    if runs.empty:
        st.warning("No runs recorded yet. Run `python cli.py bench --data-root <dir> --record`.")
        return

    col1, col2, col3 = st.columns(3)
    col1.metric("Runs", f"{len(runs):,}")
    col2.metric("Largest partition count", int(runs["max_partitions"].max()))
    col3.metric("Failed cells", int(runs["errors"].sum()))

    st.divider()

    run_id = st.selectbox(
        "Run",
        options=runs["run_id"].tolist(),
        format_func=lambda r: f"{r} ({runs.loc[runs['run_id'] == r, 'mode'].iloc[0]})",
    )
    try:
        results = _results(run_id)
    except Exception:
        import traceback
        traceback.print_exc()
        st.error("Failed to load the run. Check server logs.")
        return

    table = speedup_table(results)
    if table.empty:
        st.info("Every cell of this run failed.")
    else:
        display = table.assign(
            mean=table["mean_ms"].apply(format_ms),
            speedup_text=table["speedup"].apply(format_speedup),
        )
        st.dataframe(
            display[["query", "partitions", "mean", "speedup_text"]].rename(
                columns={"query": "Query", "partitions": "Partitions",
                         "mean": "Mean time", "speedup_text": "Speed-up"}
            ),
            hide_index=True,
            width="stretch",
        )

    failed = results[results["error"].notna()]
    if not failed.empty:
        st.subheader("Failed cells")
        st.dataframe(failed[["query", "partitions", "error"]], hide_index=True, width="stretch")

    with st.expander("Result and plan hashes"):
        st.dataframe(
            results[["query", "partitions", "result_hash", "plan_hash"]],
            hide_index=True,
            width="stretch",
        )
