"""Cotangent Laplace-Beltrami operator with barycentric vertex areas."""
import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from geometry.errors import DegenerateFaceError
from geometry.mesh import Mesh

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CotanOperator:
    """Discrete Laplacian (L u)_i = 1/(2 A_i) sum_j w_ij (u_j - u_i).

    Attributes:
        weights: Symmetric (V, V) cotangent weights w_ij = cot a_ij + cot b_ij, zero diagonal
        areas: (V,) barycentric cell areas
    """

    weights: sp.csr_matrix
    areas: np.ndarray

    @property
    def n_vertices(self) -> int:
        return int(self.areas.shape[0])

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """K = W - diag(row sums); symmetric with zero row sums."""
        row_sums = np.asarray(self.weights.sum(axis=1)).reshape(-1)
        return (self.weights - sp.diags(row_sums)).tocsr()

    @cached_property
    def laplacian(self) -> sp.csr_matrix:
        return (sp.diags(1.0 / (2.0 * self.areas)) @ self.stiffness).tocsr()

    @cached_property
    def symmetric(self) -> sp.csr_matrix:
        """D^{-1/2} K D^{-1/2} with D = diag(2A); similar to the Laplacian, negative semidefinite."""
        scale = sp.diags(1.0 / np.sqrt(2.0 * self.areas))
        return (scale @ self.stiffness @ scale).tocsr()

    def apply(self, u: np.ndarray) -> np.ndarray:
        return self.laplacian @ u

    def mass(self, u: np.ndarray) -> float:
        """Area-weighted integral sum_i A_i u_i."""
        return float(np.dot(self.areas, u))


def _corner_cotangents(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """(F, 3) cotangent of the interior angle at each face corner."""
    cots = np.empty(faces.shape, dtype=np.float64)
    for k in range(3):
        at = vertices[faces[:, k]]
        a = vertices[faces[:, (k + 1) % 3]] - at
        b = vertices[faces[:, (k + 2) % 3]] - at
        cross = np.linalg.norm(np.cross(a, b), axis=1)
        if np.any(cross == 0.0):
            raise DegenerateFaceError(f"Face {int(np.flatnonzero(cross == 0.0)[0])} has a zero angle")
        cots[:, k] = np.einsum("ij,ij->i", a, b) / cross
    return cots


def cotan_laplacian(mesh: Mesh) -> CotanOperator:
    """Assemble cotangent weights and barycentric areas.

    Each corner's cotangent is credited to the opposite edge; boundary edges keep
    the single cotangent they receive.

    Raises:
        DegenerateFaceError: If a face has a zero angle
    """
    V = mesh.n_vertices
    cots = _corner_cotangents(mesh.vertices, mesh.faces)
    edge_keys = mesh.edges[:, 0] * V + mesh.edges[:, 1]
    edge_weights = np.zeros(len(edge_keys))
    for k in range(3):
        i = mesh.faces[:, (k + 1) % 3]
        j = mesh.faces[:, (k + 2) % 3]
        keys = np.minimum(i, j) * V + np.maximum(i, j)
        np.add.at(edge_weights, np.searchsorted(edge_keys, keys), cots[:, k])

    a, b = mesh.edges[:, 0], mesh.edges[:, 1]
    weights = sp.coo_matrix(
        (np.concatenate([edge_weights, edge_weights]), (np.concatenate([a, b]), np.concatenate([b, a]))),
        shape=(V, V),
    ).tocsr()

    areas = np.zeros(V)
    for k in range(3):
        np.add.at(areas, mesh.faces[:, k], mesh.face_areas / 3.0)
    areas.setflags(write=False)
    logger.debug("Cotangent operator: %d vertices, %d edges, total area %.6g", V, len(edge_keys), areas.sum())
    return CotanOperator(weights=weights, areas=areas)
