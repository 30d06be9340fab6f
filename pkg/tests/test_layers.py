import numpy as np
import pytest

from autodiff import ops
from autodiff.gradcheck import grad_check
from autodiff.tensor import Tape
from data.primitives import icosphere
from gauge.kernels import KernelKind, block_kernel
from gauge.reps import FeatureType, build_regular_sampler, rep_apply
from geometry.frames import apply_gauge_changes
from geometry.mesh import build_mesh
from harness.evaluation import gauge_defect, random_references
from models.errors import BadArchitectureError, ResidualTypeMismatchError
from models.graph import MeshGraph
from models.layers import (
    EmanAttentionLayer,
    Flavor,
    GemConvLayer,
    HermesBlock,
    LayerConfig,
    build_layer,
    eman_attention,
    gem_conv,
    hermes_block,
    init_weights,
    regular_nonlinearity,
)

REGULAR = FeatureType.regular(2, 1)
MIXED = FeatureType((0, 1, 2))


def _weights(layer, rng, mean_degree=6.0):
    return init_weights(layer.param_specs(), mean_degree, rng)


def _apply(layer, params):
    return lambda graph, x: layer(graph, params, x).value


def test_gem_conv_zero_weights(sphere_geometry, rng) -> None:
    cfg = LayerConfig(REGULAR, MIXED, band_limit=2)
    layer = GemConvLayer(cfg)
    zeros = {name: np.zeros(spec.size) for name, spec in layer.param_specs().items()}
    graph = MeshGraph.from_geometry(sphere_geometry)
    x = rng.standard_normal((graph.n_vertices, REGULAR.dim))
    assert np.array_equal(gem_conv(graph, cfg, zeros, x).value, np.zeros((graph.n_vertices, MIXED.dim)))


def test_gem_conv_matches_per_edge_sum(sphere_geometry, rng) -> None:
    cfg = LayerConfig(REGULAR, MIXED, band_limit=2)
    layer = GemConvLayer(cfg)
    params = _weights(layer, rng)
    graph = MeshGraph.from_geometry(sphere_geometry)
    x = rng.standard_normal((graph.n_vertices, REGULAR.dim))
    out = layer(graph, params, x).value

    p = 3
    expected = layer.self_kernel.evaluate(params["self"], 0.0) @ x[p]
    for k in np.flatnonzero(graph.centers == p):
        q = graph.neighbors[k]
        moved = rep_apply(REGULAR, graph.transporter[k], x[q])
        expected += layer.neigh.evaluate(params["neigh"], graph.theta[k]) @ moved
    assert np.allclose(out[p], expected, atol=1e-12)


@pytest.mark.parametrize("self_interaction", [True, False])
def test_gem_conv_is_gauge_equivariant(sphere_geometry, rng, self_interaction) -> None:
    layer = GemConvLayer(LayerConfig(REGULAR, MIXED, band_limit=2, self_interaction=self_interaction))
    params = _weights(layer, rng)
    assert gauge_defect(_apply(layer, params), sphere_geometry, REGULAR, MIXED, trials=3, seed=5) <= 1e-9


def test_eman_is_gauge_equivariant(sphere_geometry, rng) -> None:
    cfg = LayerConfig(REGULAR, MIXED, flavor=Flavor.EMAN_ATTENTION, band_limit=2, attention_type=REGULAR)
    layer = EmanAttentionLayer(cfg)
    params = _weights(layer, rng)
    assert gauge_defect(_apply(layer, params), sphere_geometry, REGULAR, MIXED, trials=3, seed=6) <= 1e-9


def test_attention_weights_are_normalized_and_invariant(sphere_geometry, rng) -> None:
    cfg = LayerConfig(REGULAR, REGULAR, flavor="eman_attention", band_limit=2)
    layer = EmanAttentionLayer(cfg)
    params = _weights(layer, rng)
    graph = MeshGraph.from_geometry(sphere_geometry)
    V = graph.n_vertices
    x = rng.standard_normal((V, REGULAR.dim))
    _, alpha = layer.attend(graph, params, x)
    totals = np.zeros(V)
    np.add.at(totals, np.concatenate([np.arange(V), graph.centers]), alpha.value)
    assert np.allclose(totals, 1.0, atol=1e-12)

    changed, phi = apply_gauge_changes(sphere_geometry, random_references(sphere_geometry, rng))
    _, moved_alpha = layer.attend(MeshGraph.from_geometry(changed), params, rep_apply(REGULAR, -phi, x))
    assert np.abs(moved_alpha.value - alpha.value).max() <= 1e-9


def test_equal_logits_split_attention_evenly(rng) -> None:
    mesh = build_mesh([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], [[0, 1, 2]])
    graph = MeshGraph.from_mesh(mesh)
    ft = FeatureType.scalars(1)
    cfg = LayerConfig(ft, ft, flavor="eman_attention", band_limit=1)
    layer = EmanAttentionLayer(cfg)
    params = {name: np.ones(spec.size) for name, spec in layer.param_specs().items()}
    # equal features give equal self and neighbor keys
    _, alpha = layer.attend(graph, params, np.ones((3, 1)))
    assert np.allclose(alpha.value, 1.0 / 3.0, atol=1e-12)


def test_eman_without_self_interaction(sphere_geometry, rng) -> None:
    cfg = LayerConfig(REGULAR, REGULAR, flavor="eman_attention", band_limit=2, self_interaction=False)
    layer = EmanAttentionLayer(cfg)
    params = _weights(layer, rng)
    graph = MeshGraph.from_geometry(sphere_geometry)
    x = rng.standard_normal((graph.n_vertices, REGULAR.dim))
    out, alpha = layer.attend(graph, params, x)
    assert alpha.shape == (graph.n_edges,)
    assert np.array_equal(eman_attention(graph, cfg, params, x).value, out.value)


@pytest.mark.parametrize("edge_features", [True, False])
def test_linear_hermes_is_gauge_equivariant(sphere_geometry, rng, edge_features) -> None:
    cfg = LayerConfig(
        REGULAR, REGULAR, flavor="hermes_block", band_limit=2, edge_depth=2, node_depth=2,
        edge_features=edge_features, nonlinearity=False, residual=True,
    )
    layer = HermesBlock(cfg)
    params = _weights(layer, rng)
    assert gauge_defect(_apply(layer, params), sphere_geometry, REGULAR, REGULAR, trials=3, seed=8) <= 1e-9


def test_hermes_with_regular_nonlinearity_is_nearly_equivariant(sphere_geometry, rng) -> None:
    cfg = LayerConfig(REGULAR, REGULAR, flavor="hermes_block", band_limit=2, n_samples=101)
    layer = HermesBlock(cfg)
    params = _weights(layer, rng)
    assert gauge_defect(_apply(layer, params), sphere_geometry, REGULAR, REGULAR, trials=2, seed=9) <= 1e-3


def test_hermes_subsumes_gem_conv(sphere_geometry, rng) -> None:
    rho_in, rho_out = REGULAR, FeatureType.regular(1, 1)
    conv = GemConvLayer(LayerConfig(rho_in, rho_out, band_limit=2))
    conv_params = _weights(conv, rng)
    hermes = HermesBlock(
        LayerConfig(rho_in, rho_out, flavor="hermes_block", band_limit=2, edge_features=False, nonlinearity=False)
    )
    d_in, d_out = rho_in.dim, rho_out.dim

    edge = hermes.edge_net[0]
    dense_edge = np.zeros((edge.n_angular, d_out, 2 * d_in))
    dense_edge[:, :, d_in:] = conv.neigh.dense(conv_params["neigh"])
    node = hermes.node_net[0]
    dense_node = np.zeros((1, d_out, d_out + d_in))
    dense_node[0, :, :d_out] = np.eye(d_out)
    dense_node[:, :, d_out:] = conv.self_kernel.dense(conv_params["self"])
    hermes_params = {"edge.0": edge.project(dense_edge), "node.0": node.project(dense_node)}
    assert np.allclose(node.dense(hermes_params["node.0"]), dense_node, atol=1e-12)

    graph = MeshGraph.from_geometry(sphere_geometry)
    x = rng.standard_normal((graph.n_vertices, d_in))
    expected = gem_conv(graph, conv.cfg, conv_params, x).value
    assert np.abs(hermes_block(graph, hermes.cfg, hermes_params, x).value - expected).max() <= 1e-9


def test_relabeling_vertices_permutes_invariant_outputs(rng) -> None:
    mesh = icosphere(1)
    perm = rng.permutation(mesh.n_vertices)
    inverse = np.argsort(perm)
    relabeled = build_mesh(mesh.vertices[perm], inverse[mesh.faces])
    scalar = FeatureType.scalars(1)
    up = GemConvLayer(LayerConfig(scalar, REGULAR, band_limit=2))
    down = GemConvLayer(LayerConfig(REGULAR, scalar, band_limit=2))
    params = {**{f"up.{k}": v for k, v in _weights(up, rng).items()}, **{f"down.{k}": v for k, v in _weights(down, rng).items()}}

    def run(m, x):
        graph = MeshGraph.from_mesh(m)
        return down(graph, params, up(graph, params, x, "up."), "down.").value

    x = rng.standard_normal((mesh.n_vertices, 1))
    assert np.allclose(run(relabeled, x[perm]), run(mesh, x)[perm], atol=1e-10)


def test_regular_nonlinearity_matches_sampler(rng) -> None:
    sampler = build_regular_sampler(REGULAR, 11)
    x = rng.standard_normal((5, REGULAR.dim))
    assert np.allclose(regular_nonlinearity(sampler, x).value, sampler.apply(x), atol=1e-12)


def test_layer_parameters_receive_correct_gradients(rng) -> None:
    graph = MeshGraph.from_mesh(icosphere(0))
    x = rng.standard_normal((graph.n_vertices, REGULAR.dim))
    for cfg in (
        LayerConfig(REGULAR, REGULAR, band_limit=2),
        LayerConfig(REGULAR, REGULAR, flavor="eman_attention", band_limit=2),
        LayerConfig(REGULAR, REGULAR, flavor="hermes_block", band_limit=2, nonlinearity=False),
    ):
        layer = build_layer(cfg)
        names = sorted(layer.param_specs())
        params = _weights(layer, rng)
        target = rng.standard_normal((graph.n_vertices, REGULAR.dim))

        def loss(tensors):
            return ops.mse(layer(graph, dict(zip(names, tensors)), x), target)

        assert grad_check(loss, [params[n] for n in names], max_entries=6) <= 1e-5


def test_layer_config_validation() -> None:
    with pytest.raises(ResidualTypeMismatchError):
        LayerConfig(REGULAR, MIXED, flavor="hermes_block", residual=True)
    with pytest.raises(BadArchitectureError):
        LayerConfig(REGULAR, REGULAR, flavor="hermes_block", edge_depth=0)
    with pytest.raises(ValueError):
        LayerConfig(REGULAR, REGULAR, flavor="transformer")


def test_init_scales_with_fan_in(rng) -> None:
    kernel = block_kernel(FeatureType.scalars(50), FeatureType.scalars(50), KernelKind.NEIGH, 1)
    layer = GemConvLayer(LayerConfig(FeatureType.scalars(50), FeatureType.scalars(50), band_limit=1))
    weights = init_weights(layer.param_specs(), 6.0, rng)
    assert weights["neigh"].size == kernel.n_params == 2500
    assert np.std(weights["neigh"]) == pytest.approx(1.0 / np.sqrt(300.0), rel=0.1)
    assert np.std(weights["self"]) == pytest.approx(1.0 / np.sqrt(50.0), rel=0.1)


def test_tape_tracks_layer_weights(sphere_geometry, rng) -> None:
    layer = GemConvLayer(LayerConfig(REGULAR, REGULAR, band_limit=2))
    params = _weights(layer, rng)
    tape = Tape()
    tracked = {k: tape.variable(v) for k, v in params.items()}
    graph = MeshGraph.from_geometry(sphere_geometry)
    out = layer(graph, tracked, rng.standard_normal((graph.n_vertices, REGULAR.dim)))
    assert out.tracked
    readout = rng.standard_normal(out.shape)
    grads = tape.backward(ops.sum_(ops.mul(out, readout)))
    for name, variable in tracked.items():
        assert np.any(grads[variable] != 0.0), name
