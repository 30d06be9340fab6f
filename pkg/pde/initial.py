"""Initial-condition samplers."""
import numpy as np

from geometry.mesh import Mesh


def gaussian_bump_init(
    mesh: Mesh,
    fraction: float,
    seed: int,
    amplitude: float = 1.0,
    width: float | None = None,
    background: float = 0.0,
) -> np.ndarray:
    """Sum of Gaussian bumps centred on round(fraction * V) distinct random vertices.

    Args:
        mesh: Mesh supplying positions
        fraction: Share of vertices used as bump centers, in [0, 1]
        seed: Seed for center selection
        amplitude: Peak height of each bump
        width: Standard deviation in length units; defaults to twice the mean edge length
        background: Constant offset

    Returns:
        (V,) initial field
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must be in [0, 1], got {fraction}")
    if width is None:
        width = 2.0 * mesh.mean_edge_length
    n_centers = int(np.floor(fraction * mesh.n_vertices + 0.5))
    u0 = np.full(mesh.n_vertices, float(background))
    if n_centers == 0:
        return u0
    centers = np.random.default_rng(seed).choice(mesh.n_vertices, size=n_centers, replace=False)
    for c in np.sort(centers):
        dist2 = np.sum((mesh.vertices - mesh.vertices[c]) ** 2, axis=1)
        u0 += amplitude * np.exp(-dist2 / (2.0 * width**2))
    return u0


def random_normal_init(mesh: Mesh, seed: int, mean: float = 0.6, std: float = 0.05) -> np.ndarray:
    """Independent N(mean, std^2) value per vertex (Cahn-Hilliard concentrations)."""
    return np.random.default_rng(seed).normal(mean, std, size=mesh.n_vertices)
