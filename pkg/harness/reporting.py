"""Metrics files and dataset health tables."""
import json
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from harness.dataset import Dataset
from harness.evaluation import MetricsReport, summarize_seeds

logger = logging.getLogger(__name__)

METRICS_JSON = "metrics.json"
METRICS_CSV = "metrics.csv"
SUMMARY_CSV = "summary.csv"
CURVE_CSV = "rollout_curve.csv"


def write_metrics(reports: Sequence[MetricsReport], out_dir: str | Path) -> dict[str, Path]:
    """Per-seed rows (split, seed, rmse, n_samples, baselines) as CSV, full reports as JSON,
    and the across-seed summary next to them."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {"json": out_dir / METRICS_JSON, "csv": out_dir / METRICS_CSV, "summary": out_dir / SUMMARY_CSV}
    frame = pd.concat([r.to_frame() for r in reports], ignore_index=True) if reports else pd.DataFrame()
    frame.to_csv(paths["csv"], index=False)
    summarize_seeds(reports).to_csv(paths["summary"], index=False)
    paths["json"].write_text(json.dumps([r.to_dict() for r in reports], indent=2), encoding="utf-8")
    logger.info("Wrote metrics for %d seed(s) to %s", len(reports), out_dir)
    return paths


def write_curve(curve: Sequence[float], path: str | Path, flagged: bool = False) -> Path:
    """Rollout RMSE per predicted step; `flagged` marks a curve cut short by a non-finite prediction."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({"step": np.arange(1, len(curve) + 1), "rmse": list(curve)})
    frame["truncated"] = flagged
    frame.to_csv(path, index=False)
    return path


def read_metrics(run_dir: str | Path) -> pd.DataFrame:
    path = Path(run_dir) / METRICS_CSV
    if not path.is_file():
        return pd.DataFrame(columns=["split", "seed", "rmse", "n_samples"])
    return pd.read_csv(path)


def trajectory_health(dataset: Dataset) -> pd.DataFrame:
    """One row per trajectory: shape, value range, finiteness and area-weighted mass drift.

    Returns:
        DataFrame with columns file, role, mesh, frames, vertices, min, max, finite, mass_drift
    """
    rows = []
    for entry in dataset.entries:
        trajectory = dataset.load(entry)
        frames = trajectory.frames
        mass = frames @ dataset.operator(entry.mesh).areas
        scale = max(abs(float(mass[0])), 1e-300)
        rows.append(
            {
                "file": entry.file,
                "role": entry.role,
                "mesh": entry.mesh,
                "frames": trajectory.n_frames,
                "vertices": trajectory.mesh.n_vertices,
                "min": float(np.min(frames)),
                "max": float(np.max(frames)),
                "finite": bool(np.all(np.isfinite(frames))),
                "mass_drift": float(np.max(np.abs(mass - mass[0])) / scale),
            }
        )
    columns = ["file", "role", "mesh", "frames", "vertices", "min", "max", "finite", "mass_drift"]
    return pd.DataFrame(rows, columns=columns)
