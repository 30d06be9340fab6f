"""Heat, wave and Cahn-Hilliard integrators on triangle meshes."""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from config.settings import get_settings
from geometry.mesh import Mesh
from pde.errors import CGNoConvergenceError, DivergedError, InvalidParameterError, InvalidTimeStepError
from pde.laplacian import CotanOperator

logger = logging.getLogger(__name__)

WAVE_SCHEMES = ("euler", "leapfrog")
POTENTIALS = ("double_well", "quartic")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """T_max + 1 frames of a scalar field on a fixed mesh.

    Attributes:
        mesh: Mesh the field lives on
        dt: Time step between frames
        frames: (T_max + 1, V) values, frame 0 is the initial condition
        pde: "heat", "wave" or "cahn_hilliard"
        params: PDE coefficients and solver options
        seed: Seed the initial condition was drawn from, if any
    """

    mesh: Mesh
    dt: float
    frames: np.ndarray
    pde: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[1] != self.mesh.n_vertices:
            raise ValueError(
                f"Frames of shape {self.frames.shape} do not match a mesh with {self.mesh.n_vertices} vertices"
            )

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def t_max(self) -> int:
        return self.n_frames - 1


def _check_step(dt: float, t_max: int) -> None:
    if not dt > 0:
        raise InvalidTimeStepError(f"dt must be positive, got {dt}")
    if t_max < 0:
        raise InvalidTimeStepError(f"T_max must be >= 0, got {t_max}")


def _check_finite(frame: np.ndarray, step: int, pde: str) -> None:
    if not np.all(np.isfinite(frame)):
        raise DivergedError(f"{pde} simulation produced non-finite values at step {step}", step=step)


def _initial(u0, mesh: Mesh, name: str) -> np.ndarray:
    u0 = np.array(u0, dtype=np.float64)
    if u0.shape != (mesh.n_vertices,):
        raise InvalidParameterError(f"{name} must have shape ({mesh.n_vertices},), got {u0.shape}")
    _check_finite(u0, 0, name)
    return u0


def simulate_heat(
    mesh: Mesh, op: CotanOperator, u0, dt: float, t_max: int, alpha: float = 1.0, seed: int | None = None
) -> Trajectory:
    """Forward Euler: u^{t+1} = u^t + dt * alpha * L u^t.

    Raises:
        InvalidTimeStepError: If dt <= 0
        DivergedError: On the first non-finite frame
    """
    _check_step(dt, t_max)
    frames = np.empty((t_max + 1, mesh.n_vertices))
    frames[0] = _initial(u0, mesh, "u0")
    L = op.laplacian
    for t in range(t_max):
        frames[t + 1] = frames[t] + dt * alpha * (L @ frames[t])
        _check_finite(frames[t + 1], t + 1, "heat")
    return Trajectory(mesh=mesh, dt=dt, frames=frames, pde="heat", params={"alpha": alpha}, seed=seed)


def simulate_wave(
    mesh: Mesh,
    op: CotanOperator,
    u0,
    v0,
    dt: float,
    t_max: int,
    c: float = 1.0,
    scheme: str = "euler",
    seed: int | None = None,
    return_velocity: bool = False,
):
    """First-order wave system u_t = v, v_t = c^2 L u.

    "euler" updates both fields from the old state; "leapfrog" (symplectic Euler)
    advances v first and moves u with the new v.

    Returns:
        Trajectory of u, or (Trajectory, final v) when return_velocity is set

    Raises:
        InvalidTimeStepError: If dt <= 0
        InvalidParameterError: On an unknown scheme
        DivergedError: On the first non-finite frame
    """
    _check_step(dt, t_max)
    if scheme not in WAVE_SCHEMES:
        raise InvalidParameterError(f"Unknown wave scheme {scheme!r}, expected one of {WAVE_SCHEMES}")
    frames = np.empty((t_max + 1, mesh.n_vertices))
    frames[0] = _initial(u0, mesh, "u0")
    v = _initial(v0, mesh, "v0")
    L = op.laplacian
    c2 = c * c
    for t in range(t_max):
        u = frames[t]
        v_next = v + dt * c2 * (L @ u)
        frames[t + 1] = u + dt * (v_next if scheme == "leapfrog" else v)
        v = v_next
        _check_finite(frames[t + 1], t + 1, "wave")
        _check_finite(v, t + 1, "wave")
    trajectory = Trajectory(
        mesh=mesh, dt=dt, frames=frames, pde="wave", params={"c": c, "scheme": scheme}, seed=seed
    )
    return (trajectory, v) if return_velocity else trajectory


def chemical_potential_derivative(c: np.ndarray, potential: str = "double_well") -> np.ndarray:
    """f'(c) for f = 100 c^2 (1 - c)^2 ("double_well") or f = 100 c^2 (1 - c^2) ("quartic")."""
    if potential == "double_well":
        return 200.0 * c * (1.0 - c) * (1.0 - 2.0 * c)
    if potential == "quartic":
        return 200.0 * c - 400.0 * c**3
    raise InvalidParameterError(f"Unknown potential {potential!r}, expected one of {POTENTIALS}")


def simulate_cahn_hilliard(
    mesh: Mesh,
    op: CotanOperator,
    c0,
    lam: float,
    dt: float,
    t_max: int,
    mobility: float = 1.0,
    potential: str = "double_well",
    stabilization: float = 200.0,
    seed: int | None = None,
) -> Trajectory:
    """Semi-implicit Cahn-Hilliard with linear stabilization.

    Each step solves
        (I + dt M lam L L - dt M s L) c^{t+1} = c^t + dt M L (f'(c^t) - s c^t)
    by conjugate gradients on the symmetrized system in y = D^{1/2} c, D = diag(2A).
    s = 0 gives the plain scheme; s at least half the largest f'' the field visits
    keeps every mode bounded. CG starts from the right-hand side, which keeps the
    iterates in the mass-preserving subspace.

    Raises:
        InvalidParameterError: If lam, mobility or stabilization is invalid
        InvalidTimeStepError: If dt <= 0
        CGNoConvergenceError: If a solve misses the tolerance within 10 V iterations
        DivergedError: On the first non-finite frame
    """
    _check_step(dt, t_max)
    if lam <= 0:
        raise InvalidParameterError(f"lambda must be positive, got {lam}")
    if mobility <= 0:
        raise InvalidParameterError(f"Mobility must be positive, got {mobility}")
    if stabilization < 0:
        raise InvalidParameterError(f"Stabilization must be >= 0, got {stabilization}")
    if potential not in POTENTIALS:
        raise InvalidParameterError(f"Unknown potential {potential!r}, expected one of {POTENTIALS}")

    V = mesh.n_vertices
    S = op.symmetric
    L = op.laplacian
    root = np.sqrt(2.0 * op.areas)
    tau = dt * mobility * lam
    shift = dt * mobility * stabilization

    def matvec(y):
        sy = S @ y
        return y + tau * (S @ sy) - shift * sy

    system = LinearOperator((V, V), matvec=matvec, dtype=np.float64)
    tolerance = get_settings().cg_tolerance
    frames = np.empty((t_max + 1, V))
    frames[0] = _initial(c0, mesh, "c0")
    for t in range(t_max):
        c = frames[t]
        rhs = c + dt * mobility * (L @ (chemical_potential_derivative(c, potential) - stabilization * c))
        rhs_y = root * rhs
        iterations = [0]

        def count(_):
            iterations[0] += 1

        y, info = cg(system, rhs_y, x0=rhs_y.copy(), rtol=tolerance, atol=0.0, maxiter=10 * V, callback=count)
        if info != 0:
            raise CGNoConvergenceError(f"CG did not converge at step {t + 1} (info={info})")
        logger.debug("Cahn-Hilliard step %d: %d CG iterations", t + 1, iterations[0])
        frames[t + 1] = y / root
        _check_finite(frames[t + 1], t + 1, "cahn_hilliard")
    return Trajectory(
        mesh=mesh,
        dt=dt,
        frames=frames,
        pde="cahn_hilliard",
        params={
            "lambda": lam,
            "mobility": mobility,
            "potential": potential,
            "stabilization": stabilization,
            "solver": "semi-implicit, linearly stabilized, conjugate gradients",
        },
        seed=seed,
    )


def area_weighted_mass(op: CotanOperator, frames: np.ndarray) -> np.ndarray:
    """sum_i A_i u_i for every frame."""
    return np.asarray(frames) @ op.areas

