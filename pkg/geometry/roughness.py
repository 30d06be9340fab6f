"""Random displacement of vertices along their normals."""
import logging

import numpy as np

from geometry.frames import vertex_normals
from geometry.mesh import Mesh

logger = logging.getLogger(__name__)


def perturb_roughness(mesh: Mesh, scale: float, seed: int) -> Mesh:
    """Move every vertex along its normal by an independent N(0, scale^2) offset.

    Args:
        mesh: Source mesh
        scale: Standard deviation of the offsets; 0 returns the same coordinates
        seed: Seed for the offsets

    Returns:
        Mesh with identical connectivity

    Raises:
        ValueError: If scale is negative
        DegenerateFaceError: If a face collapses
    """
    if scale < 0:
        raise ValueError(f"Roughness scale must be >= 0, got {scale}")
    if scale == 0:
        return mesh.with_vertices(mesh.vertices)
    offsets = np.random.default_rng(seed).normal(0.0, scale, size=mesh.n_vertices)
    moved = mesh.vertices + offsets[:, None] * vertex_normals(mesh)
    logger.debug("Roughened mesh with scale %.3g (seed %d)", scale, seed)
    return mesh.with_vertices(moved)
