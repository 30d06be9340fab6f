import json

import numpy as np
import pandas as pd
import pytest

from config.settings import SEED_ENV_VAR
from harness.config import OptimConfig, config_hash, parse_run_config
from harness.dataset import DatasetSpec, generate, load_dataset, make_samples
from harness.errors import ConfigError, DatasetError, ShapeMismatchError, WindowTooShortError
from harness.evaluation import (
    MeanFieldPredictor,
    OraclePredictor,
    PersistencePredictor,
    evaluate,
    evaluate_model,
    rollout,
    split_rmse,
    summarize_seeds,
)
from harness.reporting import read_metrics, trajectory_health, write_curve, write_metrics
from harness.seeding import derive_seed, resolve_root_seed
from harness.training import train
from models.builder import build_model
from models.checkpoint import load_checkpoint
from models.errors import UnknownFlavorError
from models.graph import MeshGraph
from pde.laplacian import cotan_laplacian
from pde.simulate import Trajectory

TINY_MODEL = {
    "hidden_fields": 2,
    "hidden_max_frequency": 1,
    "band_limit": 2,
    "n_samples": 11,
    "history": 2,
    "edge_depth": 1,
    "node_depth": 1,
}

SMALL_DATASET = {
    "pde": "heat",
    "train_meshes": ["icosphere:1"],
    "train_trajectories": 1,
    "test_init_trajectories": 1,
    "test_mesh_trajectories": 0,
    "t_max": 10,
    "history": 2,
    "rollout_steps": 2,
    "train_end": 7,
    "test_time_start": 8,
}


def _counting(mesh, n_frames):
    frames = np.repeat(np.arange(float(n_frames))[:, None], mesh.n_vertices, axis=1)
    return Trajectory(mesh=mesh, dt=1.0, frames=frames, pde="heat")


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    return generate(DatasetSpec.from_dict(SMALL_DATASET), tmp_path_factory.mktemp("data"), root_seed=3)


@pytest.fixture(scope="module")
def config():
    return parse_run_config({"dataset": SMALL_DATASET, "model": TINY_MODEL, "optim": {"epochs": 0}})


def test_training_windows(tet) -> None:
    trajectory = _counting(tet, 11)
    samples = make_samples(trajectory, "train", history=5, rollout_steps=3)
    assert [s.t for s in samples] == [4, 5, 6, 7]
    first = samples[0]
    assert np.array_equal(first.inputs[:, 0], [0, 1, 2, 3, 4])
    assert np.array_equal(first.targets[:, 0], [5, 6, 7])


def test_test_windows_take_one_target(tet) -> None:
    trajectory = _counting(tet, 11)
    samples = make_samples(trajectory, "test_init", history=5, rollout_steps=3)
    assert [s.t for s in samples] == [4, 5, 6, 7, 8, 9]
    assert all(s.targets.shape == (1, 4) for s in samples)
    late = make_samples(trajectory, "test_time", history=5, window=(8, 10))
    assert [s.t for s in late] == [7, 8, 9]


def test_short_window_raises(tet) -> None:
    with pytest.raises(WindowTooShortError):
        make_samples(_counting(tet, 11), "train", history=5, rollout_steps=3, window=(0, 5))
    with pytest.raises(ConfigError):
        make_samples(_counting(tet, 11), "validation")


def test_train_and_test_time_targets_are_disjoint(tet) -> None:
    spec = DatasetSpec(t_max=200)
    trajectory = _counting(tet, 201)
    train_samples = make_samples(trajectory, "train", spec.history, spec.rollout_steps, spec.split_window("train"))
    late = make_samples(trajectory, "test_time", spec.history, spec.rollout_steps, spec.split_window("test_time"))
    assert max(s.targets[-1, 0] for s in train_samples) == 149
    assert late[0].t == 149
    assert min(s.targets[0, 0] for s in late) == 150


def test_dataset_spec_errors() -> None:
    with pytest.raises(ConfigError):
        DatasetSpec(pde="burgers")
    with pytest.raises(ConfigError):
        DatasetSpec(params={"viscosity": 1.0})
    with pytest.raises(ConfigError):
        DatasetSpec(train_end=150, test_time_start=150)
    with pytest.raises(ConfigError):
        DatasetSpec.from_dict({"meshes": ["icosphere:1"]})


def test_run_config_validation() -> None:
    with pytest.raises(ConfigError):
        parse_run_config({"trainer": {}})
    with pytest.raises(ConfigError):
        parse_run_config({"model": {"history": 3}})
    with pytest.raises(ConfigError):
        parse_run_config({"optim": {"lr": 0.0}})
    with pytest.raises(ConfigError):
        parse_run_config({"eval": {"splits": ["validation"]}})
    with pytest.raises(ConfigError):
        parse_run_config({"model": {"flavor": "transformer"}})
    with pytest.raises(UnknownFlavorError):
        build_model({"flavor": "transformer"})


def test_config_hash_is_canonical() -> None:
    a = {"seed": 1, "optim": {"lr": 0.1, "epochs": 2}}
    b = {"optim": {"epochs": 2, "lr": 0.1}, "seed": 1}
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash({**a, "seed": 2})
    assert parse_run_config(a).hash == config_hash(a)


def test_optimizer_presets() -> None:
    assert OptimConfig.from_dict({"preset": "wave"}).lr == 5e-4
    assert OptimConfig.from_dict({"preset": "cahn_hilliard"}).schedule == "cosine"
    assert OptimConfig.from_dict({"preset": "wave", "lr": 1e-3}).lr == 1e-3
    with pytest.raises(ConfigError):
        OptimConfig.from_dict({"preset": "burgers"})


def test_seed_derivation(monkeypatch) -> None:
    assert derive_seed(0, "init", 1) == derive_seed(0, "init", 1)
    assert derive_seed(0, "init", 1) != derive_seed(0, "init", 2)
    assert derive_seed(0, "init", 1) != derive_seed(1, "init", 1)
    assert resolve_root_seed(7) == 7
    assert resolve_root_seed() == 0
    monkeypatch.setenv(SEED_ENV_VAR, "42")
    assert resolve_root_seed(7) == 42
    monkeypatch.setenv(SEED_ENV_VAR, "abc")
    with pytest.raises(ValueError):
        resolve_root_seed(7)


def test_generate_layout(dataset) -> None:
    assert [e.role for e in dataset.entries] == ["train", "test_init"]
    trajectory = dataset.load(dataset.entries[0])
    assert trajectory.n_frames == 11
    assert trajectory.pde == "heat"
    manifest = json.loads((dataset.root / "manifest.json").read_text())
    assert manifest["root_seed"] == 3
    assert set(manifest["indexing"]) >= {"input_frames", "train_targets"}


def test_generate_is_reproducible(dataset, tmp_path) -> None:
    again = generate(dataset.spec, tmp_path / "again", root_seed=3)
    for a, b in zip(dataset.entries, again.entries):
        assert (dataset.root / a.file).read_bytes() == (again.root / b.file).read_bytes()
    other = generate(dataset.spec, tmp_path / "other", root_seed=4)
    assert (dataset.root / dataset.entries[0].file).read_bytes() != (other.root / other.entries[0].file).read_bytes()


def test_load_dataset(dataset, tmp_path) -> None:
    loaded = load_dataset(dataset.root)
    assert loaded.spec == dataset.spec
    assert loaded.entries == dataset.entries
    assert loaded.root_seed == 3
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing")
    (tmp_path / "manifest.json").write_text("{oops")
    with pytest.raises(DatasetError):
        load_dataset(tmp_path)


def test_zero_epochs_checkpoints_the_initialization(dataset, config, tmp_path) -> None:
    result = train(config, dataset, tmp_path / "run")
    assert result.log.empty
    _, params, manifest = load_checkpoint(result.checkpoint)
    assert all(np.array_equal(params[k], result.params[k]) for k in params)
    assert manifest["extra"]["config_hash"] == config.hash

    report = evaluate(result.checkpoint, dataset, ["test_init"])
    assert report.config_hash == config.hash
    assert report.splits["test_init"].n_samples == 9
    assert np.isfinite(report.splits["test_init"].rmse)


def test_one_epoch_logs_a_finite_loss(dataset, tmp_path) -> None:
    config = parse_run_config({"dataset": SMALL_DATASET, "model": TINY_MODEL, "optim": {"epochs": 1, "lr": 1e-3}})
    result = train(config, dataset, tmp_path / "run", seed=1)
    assert list(result.log["epoch"]) == [1]
    assert np.isfinite(result.log["loss"].iloc[0])
    assert (tmp_path / "run" / "train_log.csv").is_file()
    assert result.seed == 1


def test_persistence_rmse_is_pooled(dataset) -> None:
    (rmse,), n = split_rmse([PersistencePredictor()], dataset, "test_init")
    frames = dataset.trajectories("test_init")[0][1].frames
    diffs = frames[2:] - frames[1:-1]
    assert n == 9
    assert rmse == pytest.approx(np.sqrt(np.mean(diffs**2)), rel=1e-12)


def test_mean_field_keeps_the_area_weighted_mean(dataset) -> None:
    trajectory = dataset.trajectories("train")[0][1]
    graph = MeshGraph.from_mesh(trajectory.mesh)
    pred = MeanFieldPredictor().predict(graph, trajectory.frames[:2], 1)
    areas = cotan_laplacian(trajectory.mesh).areas
    assert pred.shape == (trajectory.mesh.n_vertices,)
    assert np.ptp(pred) == 0.0
    assert np.dot(areas, pred) == pytest.approx(np.dot(areas, trajectory.frames[1]), rel=1e-12)


def test_operator_areas_are_cached(dataset) -> None:
    source = dataset.entries[0].mesh
    graph = MeshGraph.from_mesh(dataset.mesh(source))
    assert graph.vertex_areas() is graph.vertex_areas()
    assert np.allclose(graph.vertex_areas(), cotan_laplacian(dataset.mesh(source)).areas, rtol=1e-14, atol=0.0)
    assert dataset.operator(source) is dataset.operator(source)


def test_roughness_applies_to_each_source(tmp_path) -> None:
    spec = DatasetSpec.from_dict(
        {**SMALL_DATASET, "test_meshes": ["icosphere:0", "icosphere:1"], "test_mesh_trajectories": 1}
    )
    data = generate(spec, tmp_path / "data", root_seed=5)
    rough = data.samples("test_mesh", roughness=(0.01, 2))
    assert sorted({sample.inputs.shape[1] for _, sample in rough}) == [12, 42]
    assert data.eval_source("icosphere:0", (0.01, 2)) == "rough:0.01:2:icosphere:0"
    assert data.eval_source("icosphere:0") == "icosphere:0"
    smooth = data.mesh("icosphere:1").vertices
    assert not np.allclose(data.mesh(data.eval_source("icosphere:1", (0.01, 2))).vertices, smooth)

    (persistence, mean_field), n = split_rmse(
        [PersistencePredictor(), MeanFieldPredictor()], data, "test_mesh", roughness=(0.01, 2)
    )
    assert n == 18
    assert np.isfinite(persistence) and np.isfinite(mean_field)


def test_rough_train_meshes(tmp_path) -> None:
    spec = DatasetSpec.from_dict(
        {**SMALL_DATASET, "train_meshes": ["rough:0.01:1:icosphere:0"], "test_init_trajectories": 0}
    )
    data = generate(spec, tmp_path / "data", root_seed=1)
    trajectory = data.load(data.entries[0])
    assert trajectory.mesh.n_vertices == 12
    assert np.all(np.isfinite(trajectory.frames))
    assert not np.allclose(trajectory.mesh.vertices, data.mesh("icosphere:0").vertices)


def test_oracle_rollout_has_zero_error(dataset) -> None:
    reference = dataset.trajectories("test_init")[0][1]
    graph = MeshGraph.from_mesh(reference.mesh)
    result = rollout(OraclePredictor(reference.frames), graph, reference, 2, reference.n_frames)
    assert len(result.curve) == 9
    assert max(result.curve) == 0.0
    assert not result.flagged
    assert np.array_equal(result.trajectory.frames, reference.frames)

    empty = rollout(PersistencePredictor(), graph, reference, 2, 2)
    assert empty.curve == []
    assert empty.trajectory.n_frames == 2
    with pytest.raises(ShapeMismatchError):
        rollout(PersistencePredictor(), graph, reference, 2, reference.n_frames + 1)


def test_evaluate_and_report(dataset, tmp_path) -> None:
    model = build_model(TINY_MODEL)
    params = model.init_params(0)
    report = evaluate_model(model, params, dataset, ["test_time", "test_init", "test_mesh"], scale_1e3=True)
    assert set(report.splits) == {"test_time", "test_init"}
    assert report.splits["test_time"].n_samples == 3
    assert report.scale == 1e3

    paths = write_metrics([report], tmp_path / "metrics")
    frame = read_metrics(tmp_path / "metrics")
    assert list(frame.columns) == ["split", "seed", "rmse", "n_samples", "persistence_rmse", "mean_field_rmse"]
    assert len(frame) == 2
    assert json.loads(paths["json"].read_text())[0]["scale"] == 1e3
    summary = pd.read_csv(paths["summary"])
    assert set(summary["split"]) == {"test_time", "test_init"}

    with pytest.raises(ShapeMismatchError):
        evaluate_model(build_model({**TINY_MODEL, "history": 3}), {}, dataset, ["test_time"])


def test_empty_summaries() -> None:
    assert list(summarize_seeds([]).columns) == ["split", "n_seeds", "median", "min", "max", "persistence_median"]


def test_write_curve(tmp_path) -> None:
    path = write_curve([0.1, 0.2], tmp_path / "curve.csv", flagged=True)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["step", "rmse", "truncated"]
    assert list(frame["step"]) == [1, 2]
    assert frame["truncated"].all()


def test_trajectory_health(dataset) -> None:
    health = trajectory_health(dataset)
    assert list(health.columns) == ["file", "role", "mesh", "frames", "vertices", "min", "max", "finite", "mass_drift"]
    assert health["finite"].all()
    assert (health["frames"] == 11).all()
    assert health["mass_drift"].max() < 1e-9
