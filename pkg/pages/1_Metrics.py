"""Metrics page: per-split RMSE, seed summaries and rollout curves."""
from pathlib import Path

import pandas as pd
import streamlit as st

from harness.reporting import CURVE_CSV, SUMMARY_CSV, read_metrics
from ui.components import debug_panel, status_caption

if "manifest" not in st.session_state or "health" not in st.session_state:
    st.error("Dataset not loaded. Please run the main app first.")
    st.stop()

status_caption(st.session_state.manifest, st.session_state.health)

st.write("# Metrics")

run_dir = st.text_input("Evaluation directory", value=st.session_state.get("run_dir", "runs/eval"))
st.session_state.run_dir = run_dir

metrics = read_metrics(run_dir)
if metrics.empty:
    st.warning(f"No metrics.csv in {run_dir}. Run `python -m harness eval` first.")
    st.stop()

scale_note = st.checkbox("Show RMSE × 1e3", value=False, key="scale_checkbox")
shown = metrics.copy()
if scale_note:
    for col in [c for c in shown.columns if c.endswith("rmse")]:
        shown[col] = shown[col] * 1e3

# Per-split table
st.write("## RMSE per split and seed")
splits = sorted(shown["split"].unique())
selected = st.multiselect("Splits", options=splits, default=splits)
st.dataframe(shown[shown["split"].isin(selected)], use_container_width=True)

# Seed summary
summary_path = Path(run_dir) / SUMMARY_CSV
if summary_path.is_file():
    st.write("## Across seeds")
    st.dataframe(pd.read_csv(summary_path), use_container_width=True)

# Rollout curve
curve_path = Path(run_dir) / CURVE_CSV
if curve_path.is_file():
    curve = pd.read_csv(curve_path)
    st.write("## Rollout RMSE per step")
    if len(curve) and bool(curve["truncated"].iloc[0]):
        st.warning("Rollout stopped early on a non-finite prediction")
    st.dataframe(curve, use_container_width=True)

with st.expander("Diagnostics", expanded=False):
    debug_panel(metrics, "metrics")
