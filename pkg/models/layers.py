"""Gauge-equivariant layers: convolution, attention, nonlinear message passing.

Layers are callables over a MeshGraph. Weights live outside the layer in a flat
mapping from parameter name to Tensor; a layer reads the names it declares in
`param_specs`, optionally under a prefix.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from gauge.kernels import BlockKernel, KernelKind, block_kernel
from gauge.reps import FeatureType, RegularSampler, build_regular_sampler
from models.errors import BadArchitectureError, ResidualTypeMismatchError
from models.graph import EDGE_FEATURE_TYPE, NO_EDGE_FEATURES, MeshGraph

logger = logging.getLogger(__name__)

Params = Mapping[str, Tensor | np.ndarray]


class Flavor(str, Enum):
    GEM_CONV = "gem_conv"
    EMAN_ATTENTION = "eman_attention"
    HERMES_BLOCK = "hermes_block"


@dataclass(frozen=True)
class LayerConfig:
    """Types and knobs of one layer.

    Attributes:
        rho_in, rho_out: Feature types at the layer boundary
        flavor: Which layer this configures
        band_limit: Angular band limit B of neighbor kernels
        n_samples: Sample count N of the regular nonlinearity
        self_interaction: Include K_self (GemConv) or the self-attention term (EMAN)
        attention_type: Key/query type of EMAN; defaults to rho_out
        edge_depth, node_depth: Hermes N_e and N_n
        residual: Hermes output += input (needs rho_in == rho_out)
        edge_features: Hermes e_pq on (distance + direction) or off
        nonlinearity: Hermes sigma; False replaces it by the identity
    """

    rho_in: FeatureType
    rho_out: FeatureType
    flavor: Flavor = Flavor.GEM_CONV
    band_limit: int = 4
    n_samples: int = 101
    self_interaction: bool = True
    attention_type: FeatureType | None = None
    edge_depth: int = 1
    node_depth: int = 1
    residual: bool = False
    edge_features: bool = True
    nonlinearity: bool = True

    def __post_init__(self):
        object.__setattr__(self, "flavor", Flavor(self.flavor))
        if self.edge_depth < 1 or self.node_depth < 1:
            raise BadArchitectureError(
                f"Edge and node depth must be >= 1, got {self.edge_depth} and {self.node_depth}"
            )
        if self.residual and self.rho_in != self.rho_out:
            raise ResidualTypeMismatchError(f"Residual needs matching types, got {self.rho_in} -> {self.rho_out}")


@dataclass(frozen=True)
class ParamSpec:
    """Size of a flat kernel-weight vector and what its fan-in is measured on."""

    size: int
    input_dim: int
    neighbor: bool


def _weight(params: Params, name: str) -> Tensor:
    value = params[name]
    return value if isinstance(value, Tensor) else Tensor(np.asarray(value, dtype=np.float64))


def kernel_matrix(kernel: BlockKernel, weights: Tensor) -> Tensor:
    """(J * d_in, d_out) stacked kernel, differentiable in the weights."""
    shape = (kernel.n_angular * kernel.rho_in.dim, kernel.rho_out.dim)
    if kernel.n_params == 0:
        return ops.constant(np.zeros(shape))
    return ops.reshape(ops.sparse_matmul(kernel.expansion, weights), shape)


def transport(graph: MeshGraph, ft: FeatureType, x_edges) -> Tensor:
    """rho(g_{q->p}) applied to per-edge neighbor features."""
    cos, sin = graph.transport_tables(ft)
    return ops.add(ops.mul(x_edges, cos), ops.mul(ops.matmul(x_edges, ft.quarter_turn), sin))


def apply_neighbor_kernel(graph: MeshGraph, kernel: BlockKernel, weights: Tensor, x_edges) -> Tensor:
    """K(theta_q) x_q for every edge, as one matmul over the angular expansion."""
    trig = graph.angular(kernel.band_limit)
    expanded = ops.concat([ops.mul(x_edges, trig[:, j:j + 1]) for j in range(trig.shape[1])], axis=1)
    return ops.matmul(expanded, kernel_matrix(kernel, weights))


def apply_self_kernel(kernel: BlockKernel, weights: Tensor, x) -> Tensor:
    return ops.matmul(x, kernel_matrix(kernel, weights))


def regular_nonlinearity(sampler: RegularSampler, f) -> Tensor:
    """Per regular field: coefficients -> N samples -> ReLU -> coefficients."""
    f = f if isinstance(f, Tensor) else ops.constant(f)
    rows = f.shape[0]
    per_field = ops.reshape(f, (rows * sampler.n_fields, sampler.field_dim))
    samples = ops.relu(ops.matmul(per_field, sampler.synthesis.T))
    coefficients = ops.matmul(samples, sampler.analysis.T)
    return ops.reshape(coefficients, (rows, sampler.feature_type.dim))


class GemConvLayer:
    """f'_p = K_self f_p + sum_q K_neigh(theta_q) rho_in(g_{q->p}) f_q."""

    def __init__(self, cfg: LayerConfig):
        self.cfg = cfg
        self.neigh = block_kernel(cfg.rho_in, cfg.rho_out, KernelKind.NEIGH, cfg.band_limit)
        self.self_kernel = (
            block_kernel(cfg.rho_in, cfg.rho_out, KernelKind.SELF, cfg.band_limit) if cfg.self_interaction else None
        )

    def param_specs(self) -> dict[str, ParamSpec]:
        specs = {"neigh": ParamSpec(self.neigh.n_params, self.cfg.rho_in.dim, True)}
        if self.self_kernel is not None:
            specs["self"] = ParamSpec(self.self_kernel.n_params, self.cfg.rho_in.dim, False)
        return specs

    def __call__(self, graph: MeshGraph, params: Params, x, prefix: str = "") -> Tensor:
        moved = transport(graph, self.cfg.rho_in, ops.gather_rows(x, graph.neighbors))
        messages = apply_neighbor_kernel(graph, self.neigh, _weight(params, prefix + "neigh"), moved)
        out = ops.scatter_sum(messages, graph.centers, graph.n_vertices)
        if self.self_kernel is not None:
            out = ops.add(out, apply_self_kernel(self.self_kernel, _weight(params, prefix + "self"), x))
        return out


class EmanAttentionLayer:
    """Single-head gauge-equivariant attention over {p} and its neighbors.

    Logits are key . query / sqrt(C_att); neighbor keys and values see the
    transported neighbor features, self keys and values see f_p.
    """

    def __init__(self, cfg: LayerConfig):
        self.cfg = cfg
        self.attention_type = cfg.attention_type or cfg.rho_out
        if self.attention_type.dim == 0:
            raise BadArchitectureError("Attention type must have positive dimension")
        B = cfg.band_limit
        self.query = block_kernel(cfg.rho_in, self.attention_type, KernelKind.SELF, B)
        self.key_neigh = block_kernel(cfg.rho_in, self.attention_type, KernelKind.NEIGH, B)
        self.value_neigh = block_kernel(cfg.rho_in, cfg.rho_out, KernelKind.NEIGH, B)
        self.key_self = self.value_self = None
        if cfg.self_interaction:
            self.key_self = block_kernel(cfg.rho_in, self.attention_type, KernelKind.SELF, B)
            self.value_self = block_kernel(cfg.rho_in, cfg.rho_out, KernelKind.SELF, B)

    def param_specs(self) -> dict[str, ParamSpec]:
        d_in = self.cfg.rho_in.dim
        specs = {
            "query": ParamSpec(self.query.n_params, d_in, False),
            "key_neigh": ParamSpec(self.key_neigh.n_params, d_in, True),
            "value_neigh": ParamSpec(self.value_neigh.n_params, d_in, True),
        }
        if self.cfg.self_interaction:
            specs["key_self"] = ParamSpec(self.key_self.n_params, d_in, False)
            specs["value_self"] = ParamSpec(self.value_self.n_params, d_in, False)
        return specs

    def attend(self, graph: MeshGraph, params: Params, x, prefix: str = "") -> tuple[Tensor, Tensor]:
        """Return (output, attention weights).

        Weights are ordered [self terms for every vertex, then every directed edge]
        when self-interaction is on, otherwise edges only.
        """
        V = graph.n_vertices
        moved = transport(graph, self.cfg.rho_in, ops.gather_rows(x, graph.neighbors))
        query = apply_self_kernel(self.query, _weight(params, prefix + "query"), x)
        key_neigh = apply_neighbor_kernel(graph, self.key_neigh, _weight(params, prefix + "key_neigh"), moved)
        norm = 1.0 / np.sqrt(self.attention_type.dim)
        logits = ops.scale(ops.sum_(ops.mul(key_neigh, ops.gather_rows(query, graph.centers)), axis=1), norm)
        segments = graph.centers
        if self.cfg.self_interaction:
            key_self = apply_self_kernel(self.key_self, _weight(params, prefix + "key_self"), x)
            self_logits = ops.scale(ops.sum_(ops.mul(key_self, query), axis=1), norm)
            logits = ops.concat([self_logits, logits], axis=0)
            segments = np.concatenate([np.arange(V), graph.centers])
        alpha = ops.segment_softmax(logits, segments, V)

        values = apply_neighbor_kernel(graph, self.value_neigh, _weight(params, prefix + "value_neigh"), moved)
        if not self.cfg.self_interaction:
            return ops.scatter_sum(ops.mul_rows(values, alpha), graph.centers, V), alpha
        alpha_self = ops.take_slice(alpha, slice(0, V))
        alpha_neigh = ops.take_slice(alpha, slice(V, None))
        out = ops.scatter_sum(ops.mul_rows(values, alpha_neigh), graph.centers, V)
        own = apply_self_kernel(self.value_self, _weight(params, prefix + "value_self"), x)
        return ops.add(out, ops.mul_rows(own, alpha_self)), alpha

    def __call__(self, graph: MeshGraph, params: Params, x, prefix: str = "") -> Tensor:
        return self.attend(graph, params, x, prefix)[0]


class HermesBlock:
    """Nonlinear message passing.

    h_pq = f_p + rho(g_{q->p}) f_q + e_pq (direct sum), pushed through N_e neighbor
    kernels each followed by sigma; messages are summed per vertex, then m_p + f_p
    goes through N_n self kernels each followed by sigma.
    """

    def __init__(self, cfg: LayerConfig):
        self.cfg = cfg
        self.edge_type = EDGE_FEATURE_TYPE if cfg.edge_features else NO_EDGE_FEATURES
        self.message_type = cfg.rho_in + cfg.rho_in + self.edge_type
        B = cfg.band_limit
        self.edge_net = [
            block_kernel(self.message_type if i == 0 else cfg.rho_out, cfg.rho_out, KernelKind.NEIGH, B)
            for i in range(cfg.edge_depth)
        ]
        self.node_net = [
            block_kernel(cfg.rho_out + cfg.rho_in if i == 0 else cfg.rho_out, cfg.rho_out, KernelKind.SELF, B)
            for i in range(cfg.node_depth)
        ]
        self.sampler = build_regular_sampler(cfg.rho_out, cfg.n_samples) if cfg.nonlinearity else None

    def param_specs(self) -> dict[str, ParamSpec]:
        specs = {}
        for i, kernel in enumerate(self.edge_net):
            specs[f"edge.{i}"] = ParamSpec(kernel.n_params, kernel.rho_in.dim, True)
        for i, kernel in enumerate(self.node_net):
            specs[f"node.{i}"] = ParamSpec(kernel.n_params, kernel.rho_in.dim, False)
        return specs

    def _sigma(self, t: Tensor) -> Tensor:
        return t if self.sampler is None else regular_nonlinearity(self.sampler, t)

    def __call__(self, graph: MeshGraph, params: Params, x, prefix: str = "") -> Tensor:
        parts = [
            ops.gather_rows(x, graph.centers),
            transport(graph, self.cfg.rho_in, ops.gather_rows(x, graph.neighbors)),
        ]
        if self.cfg.edge_features:
            parts.append(ops.constant(graph.edge_features()))
        h = ops.concat(parts, axis=1)
        for i, kernel in enumerate(self.edge_net):
            h = self._sigma(apply_neighbor_kernel(graph, kernel, _weight(params, f"{prefix}edge.{i}"), h))
        z = ops.concat([ops.scatter_sum(h, graph.centers, graph.n_vertices), x], axis=1)
        for i, kernel in enumerate(self.node_net):
            z = self._sigma(apply_self_kernel(kernel, _weight(params, f"{prefix}node.{i}"), z))
        if self.cfg.residual:
            z = ops.add(z, x)
        return z


class SelfLinear:
    """Pointwise equivariant linear map (embedding and readout)."""

    def __init__(self, rho_in: FeatureType, rho_out: FeatureType, band_limit: int):
        self.rho_in, self.rho_out = rho_in, rho_out
        self.kernel = block_kernel(rho_in, rho_out, KernelKind.SELF, band_limit)

    def param_specs(self) -> dict[str, ParamSpec]:
        return {"self": ParamSpec(self.kernel.n_params, self.rho_in.dim, False)}

    def __call__(self, graph: MeshGraph, params: Params, x, prefix: str = "") -> Tensor:
        return apply_self_kernel(self.kernel, _weight(params, prefix + "self"), x)


LAYER_TYPES = {
    Flavor.GEM_CONV: GemConvLayer,
    Flavor.EMAN_ATTENTION: EmanAttentionLayer,
    Flavor.HERMES_BLOCK: HermesBlock,
}


def build_layer(cfg: LayerConfig):
    return LAYER_TYPES[cfg.flavor](cfg)


def gem_conv(graph: MeshGraph, cfg: LayerConfig, weights: Params, f) -> Tensor:
    return GemConvLayer(cfg)(graph, weights, f)


def eman_attention(graph: MeshGraph, cfg: LayerConfig, weights: Params, f) -> Tensor:
    return EmanAttentionLayer(cfg)(graph, weights, f)


def hermes_block(graph: MeshGraph, cfg: LayerConfig, weights: Params, f) -> Tensor:
    return HermesBlock(cfg)(graph, weights, f)


def init_weights(specs: Mapping[str, ParamSpec], mean_degree: float, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Draw every kernel weight from N(0, 1/fan_in).

    fan_in is the input dimension, times the mean neighborhood size for neighbor kernels.
    """
    weights = {}
    for name, spec in specs.items():
        fan_in = max(spec.input_dim * (mean_degree if spec.neighbor else 1.0), 1.0)
        weights[name] = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=spec.size)
    return weights
