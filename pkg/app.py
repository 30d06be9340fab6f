"""Streamlit entrypoint: read-only inspector for generated datasets and runs."""
import json
from pathlib import Path

import streamlit as st

from harness.dataset import MANIFEST, load_dataset
from harness.reporting import trajectory_health
from ui.components import debug_panel, status_caption

st.set_page_config(page_title="Gauge Mesh Runs", layout="wide")

st.title("Gauge Mesh Runs")

# Run directory controls
col1, col2 = st.columns([4, 1])
with col1:
    data_dir = st.text_input("Dataset directory", value=st.session_state.get("data_dir", "runs/data"))
with col2:
    refresh_button = st.button("🔄 Reload", key="reload_btn")

if refresh_button:
    st.cache_data.clear()


@st.cache_data
def load_health(path: str):
    dataset = load_dataset(path)
    manifest = json.loads((Path(path) / MANIFEST).read_text(encoding="utf-8"))
    return manifest, trajectory_health(dataset)


if not (Path(data_dir) / MANIFEST).is_file():
    st.info(f"No dataset manifest found in {data_dir}. Run `python -m harness generate` first.")
    st.stop()

try:
    manifest, health = load_health(data_dir)
except ValueError as e:
    st.exception(e)
    st.stop()

st.session_state.data_dir = data_dir
st.session_state.manifest = manifest
st.session_state.health = health

status_caption(manifest, health)

# Dataset status box
st.write("## Dataset")
spec = manifest["spec"]
st.write(f"**PDE:** {spec['pde']}")
st.write(f"**Train meshes:** {', '.join(spec['train_meshes'])}")
st.write(f"**Test meshes:** {', '.join(spec['test_meshes']) or 'none'}")
st.write(f"**Time steps:** " + ", ".join(f"{k}: {v:.3g}" for k, v in manifest["dt"].items()))

st.write("**Split indexing:**")
st.json(manifest["indexing"])

# Trajectory health
st.write("## Trajectory Health")
bad = health[~health["finite"]]
if not bad.empty:
    st.error(f"{len(bad)} trajectories contain non-finite values")
st.dataframe(health, use_container_width=True)

with st.expander("Diagnostics", expanded=False):
    debug_panel(health, "trajectory_health")
