"""
XQFlow dashboard — benchmark history, partition speed-ups and the plan
explorer, routed through st.navigation.
"""

import streamlit as st

st.set_page_config(page_title="XQFlow · query plans", page_icon="🌲", layout="wide")

from pages.charts import page_speedup
from pages.dashboard import page_dashboard
from pages.plan_explorer import page_plan_explorer
from pages.settings_page import page_settings

# ── Sections ─────────────────────────────────────────────────────────
navigation = st.navigation({
    "Execution": [
        st.Page(page_dashboard, title="Bench Runs", icon="⏱️", default=True),
        st.Page(page_speedup, title="Partition Speed-up", icon="📊"),
    ],
    "Compiler": [
        st.Page(page_plan_explorer, title="Plans & Rewrites", icon="🌲"),
    ],
    "Engine": [
        st.Page(page_settings, title="Engine Settings", icon="🔧"),
    ],
})
navigation.run()
