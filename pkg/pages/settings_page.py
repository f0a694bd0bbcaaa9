"""
Page 4 — Settings
Edit the engine defaults and display timezone stored in the JSON settings file.
"""

import streamlit as st
import pytz
from errors import ConfigError
from settings import ENGINES, WORKER_MODES, MIN_FRAME_SIZE, load_settings, save_settings


def page_settings() -> None:
    st.header("Settings")

    current = load_settings()

    all_timezones = sorted(pytz.common_timezones)

    # Determine current index for the selectbox
    current_tz = current.get("timezone", "UTC")
    try:
        tz_index = all_timezones.index(current_tz)
    except ValueError:
        tz_index = all_timezones.index("UTC")

    with st.form("settings_form"):
        data_root = st.text_input("Data root", value=current["data_root"])
        col1, col2 = st.columns(2)
        partitions = col1.number_input("Partitions", min_value=1, max_value=256, value=int(current["partitions"]))
        frame_size = col2.number_input(
            "Frame size (bytes)", min_value=MIN_FRAME_SIZE, value=int(current["frame_size"]), step=4096,
        )
        memory_budget = col1.number_input(
            "Join memory budget (bytes)", min_value=1, value=int(current["memory_budget"]), step=1 << 20,
        )
        scratch_dir = col2.text_input("Scratch directory", value=current["scratch_dir"])
        workers = col1.selectbox("Workers", options=WORKER_MODES, index=WORKER_MODES.index(current["workers"]))
        engine = col2.selectbox("Engine", options=ENGINES, index=ENGINES.index(current["engine"]))
        queue_frames = col1.number_input(
            "Exchange queue (frames)", min_value=1, max_value=1024, value=int(current["queue_frames"]),
        )
        log_level = col2.selectbox(
            "Log level", options=["DEBUG", "INFO", "WARNING", "ERROR"],
            index=["DEBUG", "INFO", "WARNING", "ERROR"].index(current["log_level"].upper()),
        )
        timezone = col1.selectbox(
            "Display Timezone",
            options=all_timezones,
            index=tz_index,
            help="Benchmark history timestamps are shown in this timezone.",
        )

        submitted = st.form_submit_button("Save Settings", type="primary")

    if submitted:
        new_settings = {
            **current,
            "data_root": data_root,
            "partitions": int(partitions),
            "frame_size": int(frame_size),
            "memory_budget": int(memory_budget),
            "scratch_dir": scratch_dir,
            "workers": workers,
            "queue_frames": int(queue_frames),
            "engine": engine,
            "log_level": log_level,
            "timezone": timezone,
        }
        try:
            save_settings(new_settings)
        except ConfigError as exc:
            st.error(str(exc))
            return
        st.success("Settings saved successfully!")
