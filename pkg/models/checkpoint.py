"""Checkpoints: JSON manifest plus a little-endian float64 blob."""
import json
import logging
from pathlib import Path
from typing import Mapping

import numpy as np

from models.builder import ArchitectureSpec, GaugeModel, build_model
from models.errors import CheckpointError

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "gaugemesh-checkpoint"
CHECKPOINT_VERSION = 1


def save_checkpoint(path: str | Path, model: GaugeModel, params: Mapping[str, np.ndarray], seed: int, extra: dict | None = None) -> Path:
    """Write `<path>` (manifest) and `<path>.bin` next to it.

    Returns:
        Path of the manifest
    """
    path = Path(path)
    blob_path = path.with_suffix(".bin")
    table, chunks, offset = {}, [], 0
    for name, spec in model.param_specs().items():
        value = np.asarray(params[name], dtype=np.float64).reshape(-1)
        if value.size != spec.size:
            raise CheckpointError(f"Parameter {name} has {value.size} values, expected {spec.size}")
        table[name] = {"offset": offset, "shape": [int(value.size)]}
        chunks.append(value)
        offset += value.size
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "architecture": model.arch.to_dict(),
        "feature_types": {
            "input": str(model.arch.input_type),
            "hidden": str(model.arch.hidden_type),
            "output": str(model.arch.output_type),
        },
        "seed": int(seed),
        "n_values": int(offset),
        "blob": blob_path.name,
        "parameters": table,
        **({"extra": extra} if extra else {}),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    flat = np.concatenate(chunks) if chunks else np.zeros(0)
    blob_path.write_bytes(flat.astype("<f8").tobytes())
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    logger.info("Saved checkpoint with %d values to %s", offset, path)
    return path


def load_checkpoint(path: str | Path) -> tuple[GaugeModel, dict[str, np.ndarray], dict]:
    """Rebuild the model and its parameters from a manifest.

    Returns:
        (model, params, manifest)

    Raises:
        CheckpointError: If the manifest or blob is inconsistent
    """
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"Malformed checkpoint manifest {path}: {exc}") from None
    if manifest.get("format") != CHECKPOINT_FORMAT or manifest.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path} is not a version {CHECKPOINT_VERSION} checkpoint")

    model = build_model(ArchitectureSpec.from_dict(manifest["architecture"]))
    flat = np.frombuffer((path.parent / manifest["blob"]).read_bytes(), dtype="<f8").astype(np.float64)
    if flat.size != manifest["n_values"]:
        raise CheckpointError(f"Blob holds {flat.size} values, manifest declares {manifest['n_values']}")

    params = {}
    for name, spec in model.param_specs().items():
        entry = manifest["parameters"].get(name)
        if entry is None or entry["shape"] != [spec.size]:
            raise CheckpointError(f"Parameter {name} is missing or has the wrong shape in {path}")
        params[name] = flat[entry["offset"]:entry["offset"] + spec.size].copy()
    return model, params, manifest
