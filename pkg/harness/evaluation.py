"""One-step RMSE per split, baselines, autoregressive rollouts and gauge checks."""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import numpy as np
import pandas as pd

from gauge.reps import FeatureType, rotate_features
from geometry.frames import TangentGeometry, apply_gauge_changes, build_geometry
from geometry.mesh import Mesh
from harness.dataset import Dataset
from harness.errors import ShapeMismatchError
from models.builder import GaugeModel
from models.checkpoint import load_checkpoint
from models.graph import MeshGraph
from pde.simulate import Trajectory

logger = logging.getLogger(__name__)

SCALE_1E3 = 1e3


class Predictor(Protocol):
    name: str

    def predict(self, graph: MeshGraph, window: np.ndarray, t: int) -> np.ndarray:
        """Next frame from a (history, V) window whose last frame has index t."""
        ...


@dataclass
class ModelPredictor:
    model: GaugeModel
    params: Mapping[str, np.ndarray]
    name: str = "model"

    def predict(self, graph: MeshGraph, window: np.ndarray, t: int) -> np.ndarray:
        return self.model.predict(graph, self.params, window)


@dataclass
class PersistencePredictor:
    name: str = "persistence"

    def predict(self, graph: MeshGraph, window: np.ndarray, t: int) -> np.ndarray:
        return np.array(window[-1], dtype=np.float64)


@dataclass
class MeanFieldPredictor:
    """Area-weighted mean of the last frame, everywhere."""

    name: str = "mean_field"

    def predict(self, graph: MeshGraph, window: np.ndarray, t: int) -> np.ndarray:
        areas = graph.vertex_areas()
        return np.full(graph.n_vertices, float(np.dot(areas, window[-1]) / areas.sum()))


@dataclass
class OraclePredictor:
    """Returns the reference frame t + 1; scores zero by construction."""

    frames: np.ndarray
    name: str = "oracle"

    def predict(self, graph: MeshGraph, window: np.ndarray, t: int) -> np.ndarray:
        return np.array(self.frames[t + 1], dtype=np.float64)


@dataclass
class SplitMetrics:
    split: str
    rmse: float
    persistence_rmse: float
    mean_field_rmse: float
    n_samples: int


@dataclass
class MetricsReport:
    """Scores of one checkpoint; RMSE values are already multiplied by `scale`."""

    seed: int
    scale: float
    config_hash: str | None
    splits: dict[str, SplitMetrics] = field(default_factory=dict)
    wall_clock: float = 0.0
    rollout_curve: list[float] = field(default_factory=list)
    rollout_flagged: bool = False

    def to_frame(self) -> pd.DataFrame:
        rows = [{"seed": self.seed, **asdict(m)} for m in self.splits.values()]
        columns = ["split", "seed", "rmse", "n_samples", "persistence_rmse", "mean_field_rmse"]
        return pd.DataFrame(rows, columns=columns)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "scale": self.scale,
            "config_hash": self.config_hash,
            "wall_clock": self.wall_clock,
            "splits": {name: asdict(m) for name, m in self.splits.items()},
            "rollout_curve": list(self.rollout_curve),
            "rollout_flagged": self.rollout_flagged,
        }


def _graphs(
    dataset: Dataset,
    sources: Sequence[str],
    mesh_override: Mesh | None,
    roughness: tuple[float, int] | None = None,
) -> dict[str, MeshGraph]:
    if mesh_override is not None:
        graph = MeshGraph.from_mesh(mesh_override)
        return {source: graph for source in sources}
    return {
        source: MeshGraph.from_mesh(dataset.mesh(dataset.eval_source(source, roughness)))
        for source in dict.fromkeys(sources)
    }


def split_rmse(
    predictors: Sequence[Predictor],
    dataset: Dataset,
    split: str,
    mesh_override: Mesh | None = None,
    workers: int | None = None,
    roughness: tuple[float, int] | None = None,
) -> tuple[list[float], int]:
    """Pooled one-step RMSE of every predictor over all samples of a split.

    Args:
        roughness: (scale, seed) jitter applied to each trajectory's own mesh

    Returns:
        (rmse per predictor, number of samples)
    """
    samples = dataset.samples(split, mesh_override, roughness)
    graphs = _graphs(dataset, [e.mesh for e, _ in samples], mesh_override, roughness)

    def squared_errors(item) -> list[tuple[float, int]]:
        entry, sample = item
        graph = graphs[entry.mesh]
        target = sample.targets[0]
        out = []
        for predictor in predictors:
            pred = predictor.predict(graph, sample.inputs, sample.t)
            if pred.shape != target.shape:
                raise ShapeMismatchError(f"{predictor.name} predicted {pred.shape}, target is {target.shape}")
            out.append((float(np.sum((pred - target) ** 2)), target.size))
        return out

    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_sample = list(pool.map(squared_errors, samples))
    scores = []
    for i in range(len(predictors)):
        total = sum(errors[i][0] for errors in per_sample)
        count = sum(errors[i][1] for errors in per_sample)
        scores.append(float(np.sqrt(total / count)) if count else float("nan"))
    return scores, len(samples)


def evaluate_model(
    model: GaugeModel,
    params: Mapping[str, np.ndarray],
    dataset: Dataset,
    splits: Sequence[str],
    seed: int = 0,
    scale_1e3: bool = False,
    mesh_override: Mesh | None = None,
    config_hash: str | None = None,
    roughness: tuple[float, int] | None = None,
) -> MetricsReport:
    """Score a model and the persistence and mean-field baselines on each split.

    Raises:
        ShapeMismatchError: If the model's history differs from the dataset's
    """
    if model.arch.history != dataset.spec.history:
        raise ShapeMismatchError(
            f"Checkpoint expects {model.arch.history} input frames, dataset provides {dataset.spec.history}"
        )
    scale = SCALE_1E3 if scale_1e3 else 1.0
    report = MetricsReport(seed=seed, scale=scale, config_hash=config_hash)
    started = time.perf_counter()
    predictors = [ModelPredictor(model, params), PersistencePredictor(), MeanFieldPredictor()]
    for split in splits:
        if not dataset.entries_for(split):
            logger.info("Split %s has no trajectories, skipping", split)
            continue
        (rmse, persistence, mean_field), n = split_rmse(
            predictors, dataset, split, mesh_override, roughness=roughness
        )
        report.splits[split] = SplitMetrics(split, rmse * scale, persistence * scale, mean_field * scale, n)
        logger.info("%s: rmse %.6g (persistence %.6g) over %d samples", split, rmse * scale, persistence * scale, n)
    report.wall_clock = time.perf_counter() - started
    return report


def evaluate(
    checkpoint: str | Path,
    dataset: Dataset,
    splits: Sequence[str] = ("test_time", "test_init", "test_mesh"),
    scale_1e3: bool = False,
    mesh_override: Mesh | None = None,
    roughness: tuple[float, int] | None = None,
) -> MetricsReport:
    """Load a checkpoint and score it; see `evaluate_model`."""
    model, params, manifest = load_checkpoint(checkpoint)
    return evaluate_model(
        model,
        params,
        dataset,
        splits,
        seed=int(manifest["seed"]),
        scale_1e3=scale_1e3,
        mesh_override=mesh_override,
        config_hash=manifest.get("extra", {}).get("config_hash"),
        roughness=roughness,
    )


@dataclass
class RolloutResult:
    """Autoregressive prediction against a reference.

    Attributes:
        trajectory: Given initial frames followed by every finite prediction
        curve: RMSE of each predicted frame against the reference
        flagged: A prediction turned non-finite; the curve stops before it
    """

    trajectory: Trajectory
    curve: list[float]
    flagged: bool = False


def rollout(predictor: Predictor, graph: MeshGraph, reference: Trajectory, history: int, length: int) -> RolloutResult:
    """Feed predictions back from the first `history` reference frames until `length` frames exist.

    Raises:
        ShapeMismatchError: If the reference is shorter than `length` or than the history
    """
    if length > reference.n_frames or history > reference.n_frames:
        raise ShapeMismatchError(
            f"Reference has {reference.n_frames} frames, rollout needs {max(length, history)}"
        )
    frames = [np.array(f, dtype=np.float64) for f in reference.frames[:history]]
    curve = []
    flagged = False
    for t in range(history, length):
        pred = predictor.predict(graph, np.stack(frames[-history:]), t - 1)
        if not np.all(np.isfinite(pred)):
            logger.warning("Rollout produced non-finite values at frame %d", t)
            flagged = True
            break
        frames.append(pred)
        curve.append(float(np.sqrt(np.mean((pred - reference.frames[t]) ** 2))))
    trajectory = Trajectory(
        mesh=graph.geometry.mesh,
        dt=reference.dt,
        frames=np.stack(frames),
        pde=reference.pde,
        params={**reference.params, "predictor": predictor.name, "history": history},
        seed=reference.seed,
    )
    return RolloutResult(trajectory=trajectory, curve=curve, flagged=flagged)


def random_references(geometry: TangentGeometry, rng: np.random.Generator) -> np.ndarray:
    """A uniformly chosen neighbor of every vertex."""
    return np.array([int(rng.choice(nbrs)) for nbrs in geometry.mesh.neighbors], dtype=np.int64)


def gauge_defect(
    apply: Callable[[MeshGraph, np.ndarray], np.ndarray],
    geometry: TangentGeometry,
    rho_in: FeatureType,
    rho_out: FeatureType,
    trials: int,
    seed: int = 0,
    x: np.ndarray | None = None,
) -> float:
    """Largest relative gap between f(gauge-changed input) and the gauge-changed f(input).

    Each trial re-anchors the gauge of every vertex at a random neighbor, giving
    rotation phi_p; features change as rho(-phi_p).
    """
    rng = np.random.default_rng(seed)
    if x is None:
        x = rng.standard_normal((geometry.n_vertices, rho_in.dim))
    before = apply(MeshGraph.from_geometry(geometry), x)
    norm = max(float(np.linalg.norm(before)), 1e-300)
    worst = 0.0
    for _ in range(trials):
        changed, phi = apply_gauge_changes(geometry, random_references(geometry, rng))
        after = apply(MeshGraph.from_geometry(changed), rotate_features(rho_in, phi, x))
        worst = max(worst, float(np.linalg.norm(after - rotate_features(rho_out, phi, before))) / norm)
    return worst


def equivariance_check(
    model: GaugeModel, params: Mapping[str, np.ndarray], mesh: Mesh, trials: int = 3, seed: int = 0
) -> float:
    """gauge_defect of a whole model on random inputs (scalar in, scalar out)."""
    arch = model.arch

    def apply(graph: MeshGraph, x: np.ndarray) -> np.ndarray:
        return model.forward(graph, params, x).value

    defect = gauge_defect(apply, build_geometry(mesh), arch.input_type, arch.output_type, trials, seed)
    logger.info("Gauge defect over %d trials: %.3g", trials, defect)
    return defect


def summarize_seeds(reports: Sequence[MetricsReport]) -> pd.DataFrame:
    """Median and spread of RMSE per split across seeds."""
    frame = pd.concat([r.to_frame() for r in reports], ignore_index=True) if reports else pd.DataFrame()
    if frame.empty:
        return pd.DataFrame(columns=["split", "n_seeds", "median", "min", "max", "persistence_median"])
    grouped = frame.groupby("split", sort=False)
    summary = pd.DataFrame(
        {
            "n_seeds": grouped["seed"].nunique(),
            "median": grouped["rmse"].median(),
            "min": grouped["rmse"].min(),
            "max": grouped["rmse"].max(),
            "persistence_median": grouped["persistence_rmse"].median(),
        }
    )
    return summary.reset_index()
