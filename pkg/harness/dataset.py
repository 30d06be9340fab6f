"""Dataset generation on disk and supervised windows over trajectories."""
import json
import logging
import shutil
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import cached_property
from pathlib import Path
from typing import Mapping

import numpy as np

from data.primitives import mesh_from_source, rough_source
from data.trajectory_io import read_trajectory, write_trajectory
from geometry.mesh import Mesh
from harness.errors import ConfigError, DatasetError, WindowTooShortError
from harness.seeding import derive_rng, derive_seed, resolve_root_seed
from pde.initial import gaussian_bump_init, random_normal_init
from pde.laplacian import CotanOperator, cotan_laplacian
from pde.simulate import Trajectory, simulate_cahn_hilliard, simulate_heat, simulate_wave
from pde.timestep import stable_dt

logger = logging.getLogger(__name__)

PDES = ("heat", "wave", "cahn_hilliard")
SPLITS = ("train", "test_time", "test_init", "test_mesh")
# trajectory role each split reads from
SPLIT_ROLES = {"train": "train", "test_time": "train", "test_init": "test_init", "test_mesh": "test_mesh"}
MANIFEST = "manifest.json"
DATASET_FORMAT = "gaugemesh-dataset"

DEFAULT_PDE_PARAMS: dict[str, dict] = {
    "heat": {"alpha": 1.0, "fraction": 0.2, "dt": None},
    # forward Euler amplifies every wave mode, so datasets integrate with leapfrog
    "wave": {"c": 1.0, "fraction": 0.025, "scheme": "leapfrog", "dt": None},
    "cahn_hilliard": {
        "mobility": 1.0,
        "lambda_range": [0.01, 0.02],
        "dt": 5e-6,
        "potential": "double_well",
        "stabilization": 200.0,
        "mean": 0.6,
        "std": 0.05,
    },
}


@dataclass(frozen=True)
class DatasetSpec:
    """What to simulate and how to cut it into splits.

    Attributes:
        pde: "heat", "wave" or "cahn_hilliard"
        train_meshes: Mesh sources used for training (and test_time / test_init)
        test_meshes: Mesh sources only seen at evaluation
        train_trajectories: Trajectories per train mesh used for training
        test_init_trajectories: Extra trajectories per train mesh with unseen initial conditions
        test_mesh_trajectories: Trajectories per test mesh
        t_max: Number of simulated steps; each trajectory holds t_max + 1 frames
        history: Input frames per sample
        rollout_steps: Targets per training sample
        train_end: Last frame index usable as a training target
        test_time_start: First frame index used as a test_time target
        params: PDE coefficients overriding DEFAULT_PDE_PARAMS
    """

    pde: str = "heat"
    train_meshes: tuple[str, ...] = ("icosphere:3",)
    test_meshes: tuple[str, ...] = ()
    train_trajectories: int = 3
    test_init_trajectories: int = 2
    test_mesh_trajectories: int = 2
    t_max: int = 200
    history: int = 5
    rollout_steps: int = 3
    train_end: int = 149
    test_time_start: int = 150
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.pde not in PDES:
            raise ConfigError(f"Unknown PDE {self.pde!r}, expected one of {PDES}")
        object.__setattr__(self, "train_meshes", tuple(self.train_meshes))
        object.__setattr__(self, "test_meshes", tuple(self.test_meshes))
        unknown = sorted(set(self.params) - set(DEFAULT_PDE_PARAMS[self.pde]))
        if unknown:
            raise ConfigError(f"Unknown {self.pde} parameters: {unknown}")
        if not self.train_meshes:
            raise ConfigError("At least one train mesh is required")
        if self.history < 1 or self.rollout_steps < 1:
            raise ConfigError("history and rollout_steps must be >= 1")
        if min(self.train_trajectories, self.test_init_trajectories, self.test_mesh_trajectories) < 0:
            raise ConfigError("Trajectory counts must be >= 0")
        if not 0 <= self.train_end <= self.t_max:
            raise ConfigError(f"train_end {self.train_end} must lie in 0..t_max ({self.t_max})")
        if not self.train_end < self.test_time_start:
            raise ConfigError("test_time_start must come after train_end")

    @classmethod
    def from_dict(cls, raw: Mapping) -> "DatasetSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"Unknown dataset keys: {unknown}")
        return cls(**raw)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["train_meshes"] = list(self.train_meshes)
        out["test_meshes"] = list(self.test_meshes)
        return out

    @property
    def pde_params(self) -> dict:
        return {**DEFAULT_PDE_PARAMS[self.pde], **self.params}

    def split_window(self, split: str) -> tuple[int, int]:
        """Inclusive (first, last) frame index a target of `split` may take."""
        if split not in SPLITS:
            raise ConfigError(f"Unknown split {split!r}, expected one of {SPLITS}")
        if split == "train":
            return 0, self.train_end
        if split == "test_time":
            return self.test_time_start, self.t_max
        return 0, self.t_max


@dataclass(frozen=True)
class Sample:
    """Input frames t - H + 1 .. t and target frames t + 1 .. t + k of one trajectory.

    Attributes:
        trajectory: Index into the list the sample was cut from
        t: Index of the last input frame
        inputs: (history, V) frames, oldest first
        targets: (k, V) frames
    """

    trajectory: int
    t: int
    inputs: np.ndarray
    targets: np.ndarray


def make_samples(
    trajectory: Trajectory,
    split: str,
    history: int = 5,
    rollout_steps: int = 3,
    window: tuple[int, int] | None = None,
    trajectory_index: int = 0,
) -> list[Sample]:
    """Cut supervised samples out of one trajectory.

    Training samples carry `rollout_steps` targets, test samples one. Every target
    index falls inside `window` (inclusive), which defaults to the whole trajectory.

    Raises:
        ConfigError: On an unknown split
        WindowTooShortError: If the window admits no sample
    """
    if split not in SPLITS:
        raise ConfigError(f"Unknown split {split!r}, expected one of {SPLITS}")
    first, last = window if window is not None else (0, trajectory.t_max)
    last = min(last, trajectory.t_max)
    steps = rollout_steps if split == "train" else 1
    start = max(history - 1, first - 1)
    stop = last - steps
    if stop < start:
        raise WindowTooShortError(
            f"Split {split} window {first}..{last} is too short for history {history} and {steps} target(s)"
        )
    frames = trajectory.frames
    return [
        Sample(
            trajectory=trajectory_index,
            t=t,
            inputs=frames[t - history + 1 : t + 1],
            targets=frames[t + 1 : t + 1 + steps],
        )
        for t in range(start, stop + 1)
    ]


@dataclass(frozen=True)
class TrajectoryEntry:
    file: str
    mesh: str
    role: str
    mesh_index: int
    index: int
    seed: int


@dataclass
class Dataset:
    """A generated dataset directory and its manifest."""

    root: Path
    spec: DatasetSpec
    entries: list[TrajectoryEntry]
    root_seed: int
    _meshes: dict = field(default_factory=dict, repr=False)
    _operators: dict = field(default_factory=dict, repr=False)

    def mesh(self, source: str) -> Mesh:
        if source not in self._meshes:
            self._meshes[source] = mesh_from_source(source)
        return self._meshes[source]

    def operator(self, source: str) -> CotanOperator:
        """Cotangent operator of a mesh source, built once per dataset."""
        if source not in self._operators:
            self._operators[source] = cotan_laplacian(self.mesh(source))
        return self._operators[source]

    def entries_for(self, split: str) -> list[TrajectoryEntry]:
        role = SPLIT_ROLES[split]
        return [e for e in self.entries if e.role == role]

    def load(self, entry: TrajectoryEntry, mesh: Mesh | None = None) -> Trajectory:
        return read_trajectory(self.root / entry.file, mesh=mesh or self.mesh(entry.mesh))

    def trajectories(self, split: str) -> list[tuple[TrajectoryEntry, Trajectory]]:
        return [(entry, self.load(entry)) for entry in self.entries_for(split)]

    def eval_source(self, source: str, roughness: tuple[float, int] | None = None) -> str:
        """Mesh source to evaluate `source` on; roughness is (scale, seed)."""
        if roughness is None:
            return source
        return rough_source(source, *roughness)

    def samples(
        self,
        split: str,
        mesh_override: Mesh | None = None,
        roughness: tuple[float, int] | None = None,
    ) -> list[tuple[TrajectoryEntry, Sample]]:
        """All samples of a split, tagged with their trajectory entry.

        Roughness perturbs each entry's own mesh; an override replaces every mesh.
        """
        out = []
        for i, entry in enumerate(self.entries_for(split)):
            mesh = mesh_override if mesh_override is not None else self.mesh(self.eval_source(entry.mesh, roughness))
            trajectory = self.load(entry, mesh)
            for sample in make_samples(
                trajectory,
                split,
                history=self.spec.history,
                rollout_steps=self.spec.rollout_steps,
                window=self.spec.split_window(split),
                trajectory_index=i,
            ):
                out.append((entry, sample))
        return out

    @cached_property
    def indexing(self) -> dict:
        return _indexing(self.spec)


def _indexing(spec: DatasetSpec) -> dict:
    return {
        "input_frames": "t-history+1..t",
        "train_targets": f"t+1..t+{spec.rollout_steps} <= {spec.train_end}",
        "test_time_targets": f"t+1 in {spec.test_time_start}..{spec.t_max}",
        "test_init_targets": f"t+1 in {spec.history}..{spec.t_max}",
        "test_mesh_targets": f"t+1 in {spec.history}..{spec.t_max}",
    }


def _plan(spec: DatasetSpec) -> list[tuple[str, int, str, int]]:
    """(mesh source, mesh index, role, trajectory index) for every trajectory to simulate."""
    plan = []
    for m, source in enumerate(spec.train_meshes):
        for k in range(spec.train_trajectories):
            plan.append((source, m, "train", k))
        for k in range(spec.test_init_trajectories):
            plan.append((source, m, "test_init", k))
    for m, source in enumerate(spec.test_meshes):
        for k in range(spec.test_mesh_trajectories):
            plan.append((source, m, "test_mesh", k))
    return plan


def time_step(spec: DatasetSpec, op: CotanOperator) -> float:
    """Configured dt, or the stable step of the operator for heat and wave."""
    params = spec.pde_params
    if params.get("dt") is not None:
        return float(params["dt"])
    if spec.pde == "cahn_hilliard":
        raise ConfigError("Cahn-Hilliard datasets need an explicit dt")
    coefficient = params["alpha"] if spec.pde == "heat" else params["c"]
    return stable_dt(op, spec.pde, coefficient)


def simulate_one(spec: DatasetSpec, mesh: Mesh, op: CotanOperator, dt: float, seed: int, root_seed: int, key: tuple) -> Trajectory:
    """Draw an initial condition from `seed` and integrate it."""
    params = spec.pde_params
    if spec.pde == "heat":
        u0 = gaussian_bump_init(mesh, params["fraction"], seed)
        return simulate_heat(mesh, op, u0, dt, spec.t_max, alpha=params["alpha"], seed=seed)
    if spec.pde == "wave":
        u0 = gaussian_bump_init(mesh, params["fraction"], seed)
        return simulate_wave(
            mesh, op, u0, np.zeros(mesh.n_vertices), dt, spec.t_max, c=params["c"], scheme=params["scheme"], seed=seed
        )
    low, high = params["lambda_range"]
    lam = float(derive_rng(root_seed, "lambda", *key).uniform(low, high))
    c0 = random_normal_init(mesh, seed, mean=params["mean"], std=params["std"])
    return simulate_cahn_hilliard(
        mesh,
        op,
        c0,
        lam,
        dt,
        spec.t_max,
        mobility=params["mobility"],
        potential=params["potential"],
        stabilization=params["stabilization"],
        seed=seed,
    )


def generate(spec: DatasetSpec, out_dir: str | Path, root_seed: int | None = None, workers: int | None = None) -> Dataset:
    """Simulate every trajectory of `spec` into `out_dir`.

    Files written by this call are removed again if any simulation fails.

    Returns:
        The generated Dataset

    Raises:
        MeshError: If a mesh fails to load
        SimulationError: The first simulator failure
    """
    out_dir = Path(out_dir)
    root_seed = resolve_root_seed(root_seed)
    existed = out_dir.exists()
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    meshes: dict[str, tuple[Mesh, CotanOperator, float]] = {}
    for source in dict.fromkeys(spec.train_meshes + spec.test_meshes):
        mesh = mesh_from_source(source)
        op = cotan_laplacian(mesh)
        meshes[source] = (mesh, op, time_step(spec, op))
        logger.info("Mesh %s: %d vertices, dt=%.6g", source, mesh.n_vertices, meshes[source][2])

    def run(item):
        source, m, role, k = item
        mesh, op, dt = meshes[source]
        key = (spec.pde, role, m, k)
        seed = derive_seed(root_seed, "trajectory", *key)
        trajectory = simulate_one(spec, mesh, op, dt, seed, root_seed, key)
        name = f"trajectories/{role}_{m:02d}_{k:02d}.gmt"
        path = write_trajectory(out_dir / name, trajectory, source, notes={"role": role})
        written.extend([path, path.with_suffix(".json")])
        return TrajectoryEntry(file=name, mesh=source, role=role, mesh_index=m, index=k, seed=seed)

    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            entries = list(pool.map(run, _plan(spec)))
    except Exception:
        if existed:
            for path in written:
                path.unlink(missing_ok=True)
        else:
            shutil.rmtree(out_dir, ignore_errors=True)
        raise

    manifest = {
        "format": DATASET_FORMAT,
        "spec": spec.to_dict(),
        "root_seed": root_seed,
        "dt": {source: dt for source, (_, _, dt) in meshes.items()},
        "indexing": _indexing(spec),
        "trajectories": [asdict(e) for e in entries],
    }
    (out_dir / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    logger.info("Wrote %d %s trajectories to %s", len(entries), spec.pde, out_dir)
    return Dataset(root=out_dir, spec=spec, entries=entries, root_seed=root_seed)


def load_dataset(root: str | Path) -> Dataset:
    """Open a dataset directory written by `generate`.

    Raises:
        DatasetError: If the manifest is missing or malformed
    """
    root = Path(root)
    path = root / MANIFEST
    if not path.is_file():
        raise DatasetError(f"No dataset manifest at {path}")
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetError(f"Malformed dataset manifest {path}: {exc}") from None
    if manifest.get("format") != DATASET_FORMAT:
        raise DatasetError(f"{path} is not a dataset manifest")
    return Dataset(
        root=root,
        spec=DatasetSpec.from_dict(manifest["spec"]),
        entries=[TrajectoryEntry(**e) for e in manifest["trajectories"]],
        root_seed=int(manifest["root_seed"]),
    )
