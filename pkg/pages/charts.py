"""
Page 2 — Speed-up
Speed-up per query against partition count for one run, and the history of
a query's mean time across runs.
"""

import streamlit as st
import pandas as pd
import plotly.graph_objects as go
import pytz
from db import fetch_runs, fetch_results, fetch_query_history
from bench import speedup_table
from timing import format_ms
from settings import get


@st.cache_data(ttl=60, show_spinner=False)
def _runs() -> pd.DataFrame:
    return fetch_runs()


@st.cache_data(ttl=60, show_spinner=False, max_entries=50)
def _results(run_id: str) -> pd.DataFrame:
    return fetch_results(run_id)


@st.cache_data(ttl=60, show_spinner=False, max_entries=50)
def _history(query: str) -> pd.DataFrame:
    return fetch_query_history(query)


def _localize(df: pd.DataFrame, tz_name: str) -> pd.DataFrame:
    """Convert the recorded_at column to the user's chosen timezone."""
    try:
        tz = pytz.timezone(tz_name)
    except pytz.UnknownTimeZoneError:
        tz = pytz.UTC
    df["recorded_at"] = pd.to_datetime(df["recorded_at"])
    if df["recorded_at"].dt.tz is None:
        df["recorded_at"] = df["recorded_at"].dt.tz_localize("UTC")
    df["recorded_at"] = df["recorded_at"].dt.tz_convert(tz)
    return df


def speedup_figure(table: pd.DataFrame, height: int = 420) -> go.Figure:
    """One line per query plus the linear-speed-up reference."""
    fig = go.Figure()
    counts = sorted(table["partitions"].unique())
    base = counts[0] if counts else 1
    fig.add_trace(
        go.Scatter(
            x=counts,
            y=[p / base for p in counts],
            mode="lines",
            name="linear",
            line=dict(color="#95a5a6", dash="dash"),
            hoverinfo="skip",
        )
    )
    for query, rows in table.groupby("query"):
        rows = rows.sort_values("partitions")
        fig.add_trace(
            go.Scatter(
                x=rows["partitions"],
                y=rows["speedup"],
                mode="lines+markers",
                name=query,
                customdata=rows["mean_ms"].apply(format_ms),
                hovertemplate="%{x} partitions: %{y:.2f}× (%{customdata})<extra></extra>",
            )
        )
    fig.update_layout(
        height=height,
        xaxis=dict(title="Partitions", tickvals=counts),
        yaxis_title="Speed-up",
        legend=dict(orientation="h", y=1.15),
        margin=dict(l=10, r=10, t=10, b=10),
    )
    return fig


def page_speedup() -> None:
    st.header("Speed-up")

    try:
        runs = _runs()
    except Exception:
        import traceback
        traceback.print_exc()
        st.error("Failed to load the benchmark history. Check server logs.")
        return

    if runs.empty:
        st.warning("No runs recorded yet.")
        return

    run_id = st.selectbox("Run", options=runs["run_id"].tolist())
    table = speedup_table(_results(run_id))
    if table.empty:
        st.info("No successful cells in this run.")
    else:
        st.plotly_chart(speedup_figure(table), width="stretch", key=f"speedup_{run_id}")

    st.divider()
    st.subheader("History")

    query = st.selectbox("Query", options=sorted(table["query"].unique()) if not table.empty else [])
    if not query:
        return
    history = _history(query).copy()
    if history.empty:
        st.caption(f"No timings recorded for {query}.")
        return
    history = _localize(history, get("timezone"))

    fig = go.Figure()
    for partitions, rows in history.groupby("partitions"):
        fig.add_trace(
            go.Scatter(
                x=rows["recorded_at"],
                y=rows["mean_ms"],
                mode="lines+markers",
                name=f"{partitions} partition(s)",
                customdata=rows["plan_hash"],
                hovertemplate="%{y:.1f} ms, plan %{customdata}<extra></extra>",
            )
        )
    fig.update_layout(
        height=320,
        yaxis_title="Mean time (ms)",
        xaxis_title="",
        legend=dict(orientation="h", y=1.15),
        margin=dict(l=10, r=10, t=10, b=10),
        hovermode="x unified",
    )
    st.plotly_chart(fig, width="stretch", key=f"history_{query}")
