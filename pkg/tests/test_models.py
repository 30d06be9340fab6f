import json

import numpy as np
import pytest

from config.architectures import ARCHITECTURES
from models.builder import ArchitectureSpec, build_model, match_parameter_budget, parameter_count
from models.checkpoint import load_checkpoint, save_checkpoint
from models.errors import BadArchitectureError, CheckpointError, UnknownFlavorError
from models.graph import MeshGraph
from models.layers import EmanAttentionLayer, GemConvLayer, HermesBlock

TINY = {
    "hidden_fields": 2,
    "hidden_max_frequency": 1,
    "band_limit": 2,
    "n_samples": 11,
    "history": 2,
    "edge_depth": 1,
    "node_depth": 1,
}


def test_dataset_presets() -> None:
    wave = build_model({"preset": "wave/hermes"})
    assert len(wave.blocks) == 2
    block = wave.blocks[0][0][1]
    assert isinstance(block, HermesBlock)
    assert (len(block.edge_net), len(block.node_net)) == (2, 1)

    heat = build_model({"preset": "heat/hermes"})
    block = heat.blocks[0][0][1]
    assert len(heat.blocks) == 1
    assert (len(block.edge_net), len(block.node_net)) == (4, 3)


def test_convolutional_presets_stack_layers() -> None:
    arch = ArchitectureSpec.from_dict({**ARCHITECTURES["heat/gem_conv"], **TINY})
    model = build_model(arch)
    assert len(model.blocks) == 3
    assert all(len(block) == 2 and isinstance(block[0][1], GemConvLayer) for block in model.blocks)
    eman = build_model({**TINY, "flavor": "eman_attention", "blocks": 1})
    assert isinstance(eman.blocks[0][0][1], EmanAttentionLayer)


def test_parameter_count_is_reproducible() -> None:
    a, b = build_model(TINY), build_model(dict(TINY))
    assert a.n_params == b.n_params > 0
    assert list(a.param_specs()) == list(b.param_specs())


def test_parameter_budget_matching() -> None:
    gem = {"flavor": "gem_conv", "blocks": 3, "layers_per_block": 2, "hidden_fields": 16, "band_limit": 2}
    target = parameter_count(gem)
    assert target == build_model(gem).n_params

    hermes = match_parameter_budget({"preset": "cahn_hilliard/hermes", "band_limit": 2}, target)
    assert hermes.flavor.value == "hermes_block"
    assert abs(parameter_count(hermes) - target) <= 0.1 * target

    same = match_parameter_budget({**gem, "hidden_fields": 1}, target)
    assert same.hidden_fields == 16
    with pytest.raises(BadArchitectureError):
        match_parameter_budget(gem, 1)
    with pytest.raises(BadArchitectureError):
        match_parameter_budget(gem, 0)


def test_architecture_errors() -> None:
    with pytest.raises(UnknownFlavorError):
        build_model({"flavor": "transformer"})
    with pytest.raises(BadArchitectureError):
        build_model({"blocks": 0})
    with pytest.raises(BadArchitectureError):
        build_model({"band_limit": 1, "hidden_max_frequency": 2})
    with pytest.raises(BadArchitectureError):
        build_model({"preset": "heat/unet"})
    with pytest.raises(BadArchitectureError):
        build_model({"depth": 3})
    with pytest.raises(BadArchitectureError):
        build_model({"prediction": "residual"})


def test_init_is_deterministic() -> None:
    model = build_model(TINY)
    a, b = model.init_params(3), model.init_params(3)
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["embed.self"], model.init_params(4)["embed.self"])
    assert np.array_equal(a["readout.bias"], [0.0])


def test_prediction_modes(sphere, rng) -> None:
    graph = MeshGraph.from_mesh(sphere)
    window = rng.standard_normal((2, sphere.n_vertices))
    value = build_model(TINY)
    delta = build_model({**TINY, "prediction": "delta"})
    zeros = {name: np.zeros(spec.size) for name, spec in value.param_specs().items()}
    assert np.array_equal(value.predict(graph, zeros, window), np.zeros(sphere.n_vertices))
    assert np.array_equal(delta.predict(graph, zeros, window), window[-1])
    with pytest.raises(BadArchitectureError):
        value.predict(graph, zeros, window[:1])


@pytest.mark.parametrize("flavor", ["hermes_block", "gem_conv", "eman_attention"])
def test_forward_shapes(sphere, rng, flavor) -> None:
    model = build_model({**TINY, "flavor": flavor})
    graph = MeshGraph.from_mesh(sphere)
    out = model.forward(graph, model.init_params(0), rng.standard_normal((sphere.n_vertices, 2)))
    assert out.shape == (sphere.n_vertices, 1)
    assert out.is_finite()


def test_checkpoint_round_trip(tmp_path, sphere, rng) -> None:
    model = build_model(TINY)
    params = model.init_params(11)
    path = save_checkpoint(tmp_path / "run" / "checkpoint.json", model, params, seed=11, extra={"note": "x"})
    loaded, loaded_params, manifest = load_checkpoint(path)
    assert loaded.arch == model.arch
    assert manifest["seed"] == 11
    assert manifest["extra"] == {"note": "x"}
    assert manifest["feature_types"]["hidden"] == "2rho0+2rho1"
    assert all(np.array_equal(params[k], loaded_params[k]) for k in params)

    graph = MeshGraph.from_mesh(sphere)
    window = rng.standard_normal((2, sphere.n_vertices))
    assert np.array_equal(model.predict(graph, params, window), loaded.predict(graph, loaded_params, window))


def test_checkpoint_errors(tmp_path) -> None:
    model = build_model(TINY)
    params = model.init_params(0)
    path = save_checkpoint(tmp_path / "checkpoint.json", model, params, seed=0)

    blob = tmp_path / "checkpoint.bin"
    blob.write_bytes(blob.read_bytes()[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    manifest = json.loads(path.read_text())
    manifest["version"] = 99
    path.write_text(json.dumps(manifest))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    path.write_text("{not json")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)

    with pytest.raises(CheckpointError):
        save_checkpoint(tmp_path / "bad.json", model, {**params, "embed.self": np.zeros(1)}, seed=0)
