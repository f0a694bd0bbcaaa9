"""
Page 3 — Plan Explorer
Compiles a query and shows the initial, logical and physical plans, the
rewrite trace, and optionally the result.
"""

import streamlit as st
import pandas as pd
from bench import load_queries
from compiler import compile_query
from errors import XQFlowError
from processor import open_catalog, run_query
from settings import RunConfig
from timing import format_bytes, format_ms


def page_plan_explorer() -> None:
    st.header("Plan Explorer")

    queries = load_queries()
    config = RunConfig.from_settings()

    col1, col2 = st.columns([2, 1])
    name = col1.selectbox("Query", options=["(custom)", *queries])
    partitions = col2.number_input("Partitions", min_value=1, max_value=64, value=int(config.partitions))
    text = st.text_area(
        "XQuery",
        value="" if name == "(custom)" else queries[name],
        height=220,
    )
    data_root = st.text_input("Data root", value=config.data_root)
    pushdown = st.checkbox("Child-path pushdown", value=True)

    if not text.strip():
        st.info("Pick a query or type one.")
        return

    config = config.with_(data_root=data_root, partitions=int(partitions), pushdown=pushdown)
    try:
        compiled = compile_query(text, open_catalog(config), pushdown=pushdown)
    except XQFlowError as exc:
        st.error(f"{type(exc).__name__}: {exc}")
        return
    except Exception:
        import traceback
        traceback.print_exc()
        st.error("Compilation failed unexpectedly. Check server logs.")
        return

    st.caption(f"plan hash {compiled.plan_hash}, {compiled.optimized.steps} rewrite(s)")
    tabs = st.tabs(["Initial", "Logical", "Physical", "Rewrite trace"])
    for tab, stage in zip(tabs, ("initial", "logical", "physical")):
        tab.code(compiled.dump(stage), language="text")

    trace = pd.DataFrame(
        [(i + 1, entry.stage.value, entry.rule) for i, entry in enumerate(compiled.optimized.trace)],
        columns=["Step", "Stage", "Rule"],
    )
    tabs[3].dataframe(trace, hide_index=True, width="stretch")

    if not st.button("Run", type="primary"):
        return
    try:
        outcome = run_query(text, config.with_(engine="parallel"), compiled)
    except XQFlowError as exc:
        st.error(f"{type(exc).__name__}: {exc}")
        return
    except Exception:
        import traceback
        traceback.print_exc()
        st.error("Execution failed unexpectedly. Check server logs.")
        return

    stats = outcome.stats
    c1, c2, c3 = st.columns(3)
    c1.metric("Time", format_ms(outcome.elapsed_ms))
    c2.metric("Items", f"{len(outcome.result):,}")
    c3.metric("Exchanged", format_bytes(sum(stats.exchange_bytes.values())))
    st.code(outcome.text[:20000] or "(empty sequence)", language="xml")
