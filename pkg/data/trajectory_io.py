"""GMT1 trajectory files: fixed binary header, float64 frames, JSON sidecar."""
import json
import logging
import struct
from pathlib import Path

import numpy as np

from data.primitives import mesh_from_source
from geometry.mesh import Mesh
from pde.simulate import Trajectory

logger = logging.getLogger(__name__)

MAGIC = b"GMT1"
VERSION = 1
# magic, version, |V|, frame count, dt
HEADER = struct.Struct("<4sIQQd")


class TrajectoryFormatError(ValueError):
    pass


def sidecar_path(path: str | Path) -> Path:
    return Path(path).with_suffix(".json")


def write_trajectory(path: str | Path, trajectory: Trajectory, mesh_source: str, notes: dict | None = None) -> Path:
    """Write `<path>` (binary frames) and `<path>.json` (manifest).

    Args:
        path: Destination of the binary file, conventionally ending in .gmt
        trajectory: Frames to store
        mesh_source: String that `mesh_from_source` resolves back to the mesh
        notes: Extra manifest entries (split roles, indexing convention, ...)

    Returns:
        Path of the binary file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frames = np.ascontiguousarray(trajectory.frames, dtype="<f8")
    header = HEADER.pack(MAGIC, VERSION, trajectory.mesh.n_vertices, trajectory.n_frames, float(trajectory.dt))
    path.write_bytes(header + frames.tobytes())
    manifest = {
        "mesh": mesh_source,
        "pde": trajectory.pde,
        "params": trajectory.params,
        "seed": trajectory.seed,
        "dt": float(trajectory.dt),
        "n_vertices": trajectory.mesh.n_vertices,
        "n_frames": trajectory.n_frames,
        **(notes or {}),
    }
    sidecar_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logger.debug("Wrote %d frames of %d vertices to %s", trajectory.n_frames, trajectory.mesh.n_vertices, path)
    return path


def read_frames(path: str | Path) -> tuple[np.ndarray, float]:
    """Read only the binary part.

    Returns:
        ((T_max + 1, V) frames, dt)

    Raises:
        TrajectoryFormatError: On a bad magic, version or length
    """
    raw = Path(path).read_bytes()
    if len(raw) < HEADER.size:
        raise TrajectoryFormatError(f"{path} is shorter than a GMT1 header")
    magic, version, n_vertices, n_frames, dt = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise TrajectoryFormatError(f"{path} does not start with {MAGIC!r}")
    if version != VERSION:
        raise TrajectoryFormatError(f"{path} has version {version}, expected {VERSION}")
    expected = HEADER.size + 8 * n_vertices * n_frames
    if len(raw) != expected:
        raise TrajectoryFormatError(f"{path} holds {len(raw)} bytes, header implies {expected}")
    frames = np.frombuffer(raw, dtype="<f8", offset=HEADER.size).reshape(n_frames, n_vertices)
    return frames.astype(np.float64), float(dt)


def read_manifest(path: str | Path) -> dict:
    return json.loads(sidecar_path(path).read_text(encoding="utf-8"))


def read_trajectory(path: str | Path, mesh: Mesh | None = None) -> Trajectory:
    """Load frames and sidecar; the mesh is rebuilt from the manifest unless given."""
    frames, dt = read_frames(path)
    manifest = read_manifest(path)
    if mesh is None:
        mesh = mesh_from_source(manifest["mesh"])
    if mesh.n_vertices != frames.shape[1]:
        raise TrajectoryFormatError(
            f"{path} has {frames.shape[1]} vertices but its mesh has {mesh.n_vertices}"
        )
    return Trajectory(
        mesh=mesh,
        dt=dt,
        frames=frames,
        pde=manifest["pde"],
        params=manifest.get("params", {}),
        seed=manifest.get("seed"),
    )
