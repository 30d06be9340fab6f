"""Streamlit UI components for inspecting runs."""
import numpy as np
import pandas as pd
import streamlit as st


def debug_panel(df: pd.DataFrame, title: str):
    """Shape, leading rows, dtypes and non-finite counts of a run table.

    Stops the page (st.stop) when the table is missing or empty.
    """
    if df is None or df.empty:
        st.error(f"{title}: table is empty")
        st.stop()
        return

    st.write(f"### {title}")
    st.write(f"**Rows:** {df.shape[0]} | **Columns:** {df.shape[1]}")
    st.dataframe(df.head(10))

    st.write("**Column types:**")
    st.dataframe(pd.DataFrame(df.dtypes.astype(str), columns=["dtype"]))

    # NaN and +-inf both count; RMSE columns turn inf when a rollout diverges
    numeric = df.select_dtypes(include="number")
    bad = (~np.isfinite(numeric)).sum().sort_values(ascending=False)
    st.write("**Non-finite values per column:**")
    st.dataframe(pd.DataFrame(bad, columns=["non-finite"]).head(10))
    st.write("**Summary statistics:**")
    st.dataframe(numeric.describe().T)


def status_caption(manifest: dict, health: pd.DataFrame):
    """One-line dataset summary shown at the top of every page.

    Args:
        manifest: Dataset manifest as written by harness.dataset.generate
        health: Output of harness.reporting.trajectory_health
    """
    spec = manifest.get("spec", {})
    n_bad = int((~health["finite"]).sum()) if not health.empty else 0
    worst_drift = float(health["mass_drift"].max()) if not health.empty else 0.0
    st.caption(
        f"PDE {spec.get('pde', '?')} | trajectories {len(health)} | T_max {spec.get('t_max', '?')} "
        f"| root seed {manifest.get('root_seed', '?')} | non-finite {n_bad} | max mass drift {worst_drift:.2e}"
    )
