"""Run configuration: one JSON document with dataset, model, optim and eval sections."""
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping

from config.architectures import OPTIMIZERS
from config.settings import get_settings
from harness.dataset import SPLITS, DatasetSpec
from harness.errors import ConfigError
from models.builder import ArchitectureSpec
from models.errors import LayerError

SECTIONS = ("dataset", "model", "optim", "eval", "seed")
SCHEDULES = ("constant", "cosine")


def _strict(cls, raw: Mapping, section: str):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"Unknown {section} keys: {unknown}")
    return cls(**raw)


@dataclass(frozen=True)
class OptimConfig:
    """Adam settings; a "preset" key in the raw section pulls a per-PDE row of OPTIMIZERS."""

    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 1
    schedule: str = "constant"
    weight_decay: float = field(default_factory=lambda: get_settings().l2_coefficient)
    seeds: tuple[int, ...] = (0,)

    def __post_init__(self):
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if self.schedule not in SCHEDULES:
            raise ConfigError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("lr must be positive, epochs >= 0 and batch_size >= 1")
        if not self.seeds:
            raise ConfigError("At least one training seed is required")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "OptimConfig":
        raw = dict(raw)
        preset = raw.pop("preset", None)
        if preset is not None:
            if preset not in OPTIMIZERS:
                raise ConfigError(f"Unknown optimizer preset {preset!r}")
            raw = {**OPTIMIZERS[preset], **raw}
        return _strict(cls, raw, "optim")


@dataclass(frozen=True)
class EvalConfig:
    """Evaluation options.

    Attributes:
        splits: Splits scored by `eval`
        scale_1e3: Report RMSE in units of 1e-3
        rollout_steps: Horizon of the autoregressive rollout
        equivariance_trials: Random gauge assignments per equivariance check
    """

    splits: tuple[str, ...] = ("test_time", "test_init", "test_mesh")
    scale_1e3: bool = False
    rollout_steps: int = 50
    equivariance_trials: int = 3

    def __post_init__(self):
        object.__setattr__(self, "splits", tuple(self.splits))
        bad = [s for s in self.splits if s not in SPLITS]
        if bad:
            raise ConfigError(f"Unknown splits {bad}, expected a subset of {SPLITS}")
        if self.rollout_steps < 0 or self.equivariance_trials < 1:
            raise ConfigError("rollout_steps must be >= 0 and equivariance_trials >= 1")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetSpec
    model: ArchitectureSpec
    optim: OptimConfig
    eval: EvalConfig
    seed: int | None
    hash: str

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset.to_dict(),
            "model": self.model.to_dict(),
            "optim": asdict(self.optim),
            "eval": asdict(self.eval),
            "seed": self.seed,
        }


def config_hash(raw: Mapping) -> str:
    """sha256 of the canonical JSON form (sorted keys, no whitespace)."""
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=list)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_run_config(raw: Mapping) -> RunConfig:
    """Validate a raw mapping; missing sections and keys take their defaults.

    Raises:
        ConfigError: On unknown sections or keys, or invalid values
    """
    if not isinstance(raw, Mapping):
        raise ConfigError("Run configuration must be a JSON object")
    unknown = sorted(set(raw) - set(SECTIONS))
    if unknown:
        raise ConfigError(f"Unknown config sections: {unknown}")
    dataset = DatasetSpec.from_dict(raw.get("dataset", {}))
    try:
        model = ArchitectureSpec.from_dict(raw.get("model", {}))
    except LayerError as exc:
        raise ConfigError(str(exc)) from None
    if model.history != dataset.history:
        raise ConfigError(f"Model history {model.history} differs from dataset history {dataset.history}")
    seed = raw.get("seed")
    return RunConfig(
        dataset=dataset,
        model=model,
        optim=OptimConfig.from_dict(raw.get("optim", {})),
        eval=_strict(EvalConfig, raw.get("eval", {}), "eval"),
        seed=None if seed is None else int(seed),
        hash=config_hash(raw),
    )


def load_run_config(path: str | Path) -> RunConfig:
    """Read and validate a JSON run configuration.

    Raises:
        ConfigError: If the file is not valid JSON or fails validation
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Malformed config {path}: {exc}") from None
    return parse_run_config(raw)
