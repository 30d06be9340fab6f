"""Model assembly: embedding, message blocks, readout."""
import logging
from dataclasses import asdict, dataclass, fields, replace
from typing import Mapping

import numpy as np

from autodiff import ops
from autodiff.tensor import Tensor
from config.architectures import ARCHITECTURES
from gauge.reps import FeatureType, build_regular_sampler
from models.errors import BadArchitectureError, UnknownFlavorError
from models.graph import MeshGraph
from models.layers import (
    Flavor,
    LayerConfig,
    ParamSpec,
    SelfLinear,
    build_layer,
    init_weights,
    regular_nonlinearity,
)

logger = logging.getLogger(__name__)

PREDICTION_MODES = ("value", "delta")
BIAS = "readout.bias"


@dataclass(frozen=True)
class ArchitectureSpec:
    """Everything needed to rebuild a model.

    Attributes:
        flavor: Layer flavor of the message blocks
        blocks: Number of message blocks
        hidden_fields, hidden_max_frequency: Hidden type is hidden_fields copies of rho_0 + ... + rho_F
        history: Number of input frames (input type history * rho_0)
        layers_per_block: GemConv/EMAN layers per block
        edge_depth, node_depth: Hermes N_e and N_n
        residual: Residual connection around every block
        edge_features: Hermes distance/direction edge features
        self_interaction: Self kernels in GemConv/EMAN layers
        prediction: "value" predicts the next frame, "delta" the change from the last input
    """

    flavor: Flavor = Flavor.HERMES_BLOCK
    blocks: int = 1
    hidden_fields: int = 12
    hidden_max_frequency: int = 2
    history: int = 5
    band_limit: int = 4
    n_samples: int = 101
    layers_per_block: int = 1
    edge_depth: int = 2
    node_depth: int = 1
    residual: bool = True
    edge_features: bool = True
    self_interaction: bool = True
    prediction: str = "value"

    def __post_init__(self):
        try:
            object.__setattr__(self, "flavor", Flavor(self.flavor))
        except ValueError:
            raise UnknownFlavorError(f"Unknown flavor {self.flavor!r}, expected one of {[f.value for f in Flavor]}") from None
        if self.prediction not in PREDICTION_MODES:
            raise BadArchitectureError(f"prediction must be one of {PREDICTION_MODES}, got {self.prediction!r}")
        for name in ("blocks", "hidden_fields", "history", "layers_per_block", "edge_depth", "node_depth"):
            if getattr(self, name) < 1:
                raise BadArchitectureError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.hidden_max_frequency < 0 or self.band_limit < self.hidden_max_frequency:
            raise BadArchitectureError(
                f"Hidden frequency {self.hidden_max_frequency} must be in 0..band_limit ({self.band_limit})"
            )

    @classmethod
    def from_dict(cls, raw: Mapping) -> "ArchitectureSpec":
        """Build from a mapping; a "preset" key pulls defaults from config.architectures.

        Raises:
            BadArchitectureError: On unknown keys or presets
            UnknownFlavorError: On an unknown flavor
        """
        raw = dict(raw)
        preset = raw.pop("preset", None)
        if preset is not None:
            if preset not in ARCHITECTURES:
                raise BadArchitectureError(f"Unknown architecture preset {preset!r}")
            raw = {**ARCHITECTURES[preset], **raw}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise BadArchitectureError(f"Unknown architecture keys: {unknown}")
        return cls(**raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["flavor"] = self.flavor.value
        return out

    @property
    def input_type(self) -> FeatureType:
        return FeatureType.scalars(self.history)

    @property
    def hidden_type(self) -> FeatureType:
        return FeatureType.regular(self.hidden_fields, self.hidden_max_frequency)

    @property
    def output_type(self) -> FeatureType:
        return FeatureType.scalars(1)


class GaugeModel:
    """history * rho_0 -> hidden blocks -> 1 * rho_0 predictor over a mesh."""

    def __init__(self, arch: ArchitectureSpec):
        self.arch = arch
        hidden = arch.hidden_type
        self.embed = SelfLinear(arch.input_type, hidden, arch.band_limit)
        self.readout = SelfLinear(hidden, arch.output_type, arch.band_limit)
        self.sampler = build_regular_sampler(hidden, arch.n_samples)
        self.blocks: list[list[tuple[str, object]]] = []
        for b in range(arch.blocks):
            if arch.flavor is Flavor.HERMES_BLOCK:
                cfg = LayerConfig(
                    rho_in=hidden,
                    rho_out=hidden,
                    flavor=arch.flavor,
                    band_limit=arch.band_limit,
                    n_samples=arch.n_samples,
                    edge_depth=arch.edge_depth,
                    node_depth=arch.node_depth,
                    residual=arch.residual,
                    edge_features=arch.edge_features,
                )
                self.blocks.append([(f"blocks.{b}.", build_layer(cfg))])
            else:
                cfg = LayerConfig(
                    rho_in=hidden,
                    rho_out=hidden,
                    flavor=arch.flavor,
                    band_limit=arch.band_limit,
                    n_samples=arch.n_samples,
                    self_interaction=arch.self_interaction,
                )
                self.blocks.append(
                    [(f"blocks.{b}.{layer}.", build_layer(cfg)) for layer in range(arch.layers_per_block)]
                )

    def param_specs(self) -> dict[str, ParamSpec]:
        specs = {f"embed.{k}": v for k, v in self.embed.param_specs().items()}
        for block in self.blocks:
            for prefix, layer in block:
                specs.update({prefix + k: v for k, v in layer.param_specs().items()})
        specs.update({f"readout.{k}": v for k, v in self.readout.param_specs().items()})
        specs[BIAS] = ParamSpec(1, 1, False)
        return specs

    @property
    def n_params(self) -> int:
        return sum(spec.size for spec in self.param_specs().values())

    def init_params(self, seed: int, mean_degree: float = 6.0) -> dict[str, np.ndarray]:
        """Deterministic N(0, 1/fan_in) kernel weights and a zero readout bias."""
        specs = self.param_specs()
        bias = specs.pop(BIAS)
        params = init_weights(specs, mean_degree, np.random.default_rng(seed))
        params[BIAS] = np.zeros(bias.size)
        return params

    def forward(self, graph: MeshGraph, params: Mapping, window) -> Tensor:
        """Map a (V, history) window, oldest frame first, to (V, 1) predictions."""
        h = self.embed(graph, params, window, "embed.")
        hermes = self.arch.flavor is Flavor.HERMES_BLOCK
        for block in self.blocks:
            block_input = h
            for prefix, layer in block:
                h = layer(graph, params, h, prefix)
                if not hermes:
                    h = regular_nonlinearity(self.sampler, h)
            if self.arch.residual and not hermes:
                h = ops.add(h, block_input)
        out = ops.add(self.readout(graph, params, h, "readout."), _param(params, BIAS))
        if self.arch.prediction == "delta":
            last = ops.take_slice(window, (slice(None), slice(self.arch.history - 1, self.arch.history)))
            out = ops.add(out, last)
        return out

    def predict(self, graph: MeshGraph, params: Mapping[str, np.ndarray], window: np.ndarray) -> np.ndarray:
        """Numpy convenience: (history, V) frames -> (V,) next frame."""
        frames = np.asarray(window, dtype=np.float64)
        if frames.shape != (self.arch.history, graph.n_vertices):
            raise BadArchitectureError(
                f"Expected a window of shape {(self.arch.history, graph.n_vertices)}, got {frames.shape}"
            )
        return self.forward(graph, params, frames.T).value[:, 0]


def _param(params: Mapping, name: str) -> Tensor:
    value = params[name]
    return value if isinstance(value, Tensor) else ops.constant(value)


def build_model(arch: ArchitectureSpec | Mapping) -> GaugeModel:
    """Build a model from a spec or a raw mapping.

    Raises:
        UnknownFlavorError: If the flavor is not one of gem_conv, eman_attention, hermes_block
        BadArchitectureError: If the description is malformed
    """
    if not isinstance(arch, ArchitectureSpec):
        arch = ArchitectureSpec.from_dict(arch)
    model = GaugeModel(arch)
    logger.info("Built %s model: %d blocks, %d parameters", arch.flavor.value, arch.blocks, model.n_params)
    return model


def parameter_count(arch: ArchitectureSpec | Mapping) -> int:
    """Trainable entries of the model an architecture describes."""
    if not isinstance(arch, ArchitectureSpec):
        arch = ArchitectureSpec.from_dict(arch)
    return GaugeModel(arch).n_params


def match_parameter_budget(
    arch: ArchitectureSpec | Mapping, target: int, tolerance: float = 0.1, max_fields: int = 256
) -> ArchitectureSpec:
    """Choose hidden_fields so the parameter count lands closest to `target`.

    Raises:
        BadArchitectureError: If no width lands within `tolerance` (relative) of the target
    """
    if not isinstance(arch, ArchitectureSpec):
        arch = ArchitectureSpec.from_dict(arch)
    if target < 1:
        raise BadArchitectureError(f"Parameter budget must be positive, got {target}")
    best, best_gap = arch, float("inf")
    for width in range(1, max_fields + 1):
        candidate = replace(arch, hidden_fields=width)
        count = GaugeModel(candidate).n_params
        gap = abs(count - target) / target
        if gap < best_gap:
            best, best_gap = candidate, gap
        # counts grow with the width
        if count > target:
            break
    if best_gap > tolerance:
        raise BadArchitectureError(
            f"No {arch.flavor.value} width within {tolerance:.0%} of {target} parameters (closest off by {best_gap:.1%})"
        )
    logger.info("Matched %s to %d parameters with %d hidden fields", arch.flavor.value, target, best.hidden_fields)
    return best
