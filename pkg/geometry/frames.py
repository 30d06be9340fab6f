"""Tangent frames, neighbor angles, parallel transporters and gauge changes."""
import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from geometry.errors import (
    AntipodalNormalsError,
    DegenerateFaceError,
    NotANeighborError,
    ZeroLogError,
    ZeroNormalError,
)
from geometry.mesh import Mesh

logger = logging.getLogger(__name__)

TAU = 2.0 * np.pi
_ZERO_LOG = 1e-12
_ANTIPODAL = 1e-12


class ReferenceChoice(str, Enum):
    FIRST_NEIGHBOR = "first_neighbor"
    LOWEST_INDEX = "lowest_index"


@dataclass(frozen=True, eq=False)
class TangentGeometry:
    """Per-vertex gauges and per-directed-edge angles of a mesh.

    Edge arrays follow `mesh.edge_index`: entry k describes the directed edge whose
    center is p = edge_index[0, k] and whose neighbor is q = edge_index[1, k].

    Attributes:
        mesh: Source mesh
        normals: (V, 3) unit vertex normals n_b
        e1, e2: (V, 3) positively oriented orthonormal tangent frames (e2 = n x e1)
        reference: (V,) reference neighbor index d per vertex
        reference_edge: (V,) position of the edge (p, d) in the edge arrays
        theta: (2E,) angle of q in the frame at p, in [0, 2pi)
        log_norms: (2E,) length of log_p(x_q)
        transporter: (2E,) g_{q->p} in [0, 2pi), or None before transporters are built
    """

    mesh: Mesh
    normals: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    reference: np.ndarray
    reference_edge: np.ndarray
    theta: np.ndarray
    log_norms: np.ndarray
    transporter: np.ndarray | None = None

    @property
    def edge_index(self) -> np.ndarray:
        return self.mesh.edge_index

    @property
    def n_vertices(self) -> int:
        return self.mesh.n_vertices

    def edge_position(self, p: int, q: int) -> int:
        """Return the position of directed edge (p, q) in the edge arrays.

        Raises:
            NotANeighborError: If q is not a neighbor of p
        """
        centers, others = self.mesh.edge_index
        hits = np.flatnonzero((centers == p) & (others == q))
        if len(hits) == 0:
            raise NotANeighborError(f"Vertex {q} is not a neighbor of vertex {p}")
        return int(hits[0])


def wrap_angle(angle):
    """Reduce angles to [0, 2pi)."""
    wrapped = np.mod(angle, TAU)
    return np.where(wrapped >= TAU, 0.0, wrapped)


def vertex_normals(mesh: Mesh) -> np.ndarray:
    """Normalized mean of incident face normals.

    Args:
        mesh: Validated mesh

    Returns:
        (V, 3) unit normals

    Raises:
        DegenerateFaceError: If an incident face has zero area
        ZeroNormalError: If incident face normals cancel
    """
    v0 = mesh.vertices[mesh.faces[:, 0]]
    v1 = mesh.vertices[mesh.faces[:, 1]]
    v2 = mesh.vertices[mesh.faces[:, 2]]
    cross = np.cross(v1 - v0, v2 - v0)
    lengths = np.linalg.norm(cross, axis=1)
    if np.any(lengths == 0.0):
        raise DegenerateFaceError(f"Face {int(np.flatnonzero(lengths == 0.0)[0])} has zero area")
    face_normals = cross / lengths[:, None]

    total = np.zeros_like(mesh.vertices)
    counts = np.zeros(mesh.n_vertices)
    for corner in range(3):
        np.add.at(total, mesh.faces[:, corner], face_normals)
        np.add.at(counts, mesh.faces[:, corner], 1.0)
    mean = total / counts[:, None]
    norms = np.linalg.norm(mean, axis=1)
    zero = np.flatnonzero(norms <= 1e-12)
    if len(zero):
        raise ZeroNormalError(f"Incident face normals cancel at vertex {int(zero[0])}")
    normals = mean / norms[:, None]
    normals.setflags(write=False)
    return normals


def log_map(mesh: Mesh, normals: np.ndarray, b: int, v: int) -> np.ndarray:
    """Project x_v onto the tangent plane at b and return the offset from x_b.

    Raises:
        ValueError: If v == b
        ZeroLogError: If x_v - x_b is parallel to n_b
    """
    if v == b:
        raise ValueError("log_map needs two distinct vertices")
    offset = mesh.vertices[v] - mesh.vertices[b]
    n = normals[b]
    log = offset - np.dot(offset, n) * n
    if np.linalg.norm(log) <= _ZERO_LOG * max(np.linalg.norm(offset), 1.0):
        raise ZeroLogError(f"log_{b}(x_{v}) vanishes: the edge is parallel to the normal")
    return log


def _edge_logs(mesh: Mesh, normals: np.ndarray) -> np.ndarray:
    p, q = mesh.edge_index
    offset = mesh.vertices[q] - mesh.vertices[p]
    n = normals[p]
    return offset - np.einsum("ij,ij->i", offset, n)[:, None] * n


def build_frames(
    mesh: Mesh,
    normals: np.ndarray,
    reference_choice: ReferenceChoice | str = ReferenceChoice.LOWEST_INDEX,
) -> TangentGeometry:
    """Fix a gauge at every vertex from a reference neighbor and measure neighbor angles.

    Args:
        mesh: Validated mesh
        normals: (V, 3) unit normals
        reference_choice: FIRST_NEIGHBOR uses the first adjacency entry;
            LOWEST_INDEX uses the lowest-index neighbor with a nonzero log map

    Returns:
        TangentGeometry without transporters

    Raises:
        ZeroLogError: If the reference neighbor projects to zero
    """
    reference_choice = ReferenceChoice(reference_choice)
    logs = _edge_logs(mesh, normals)
    log_norms = np.linalg.norm(logs, axis=1)
    p_idx, q_idx = mesh.edge_index
    offsets = np.linalg.norm(mesh.vertices[q_idx] - mesh.vertices[p_idx], axis=1)
    usable = log_norms > _ZERO_LOG * np.maximum(offsets, 1.0)

    reference = np.empty(mesh.n_vertices, dtype=np.int64)
    reference_edge = np.empty(mesh.n_vertices, dtype=np.int64)
    start = 0
    for p, nbrs in enumerate(mesh.neighbors):
        positions = np.arange(start, start + len(nbrs))
        start += len(nbrs)
        if reference_choice is ReferenceChoice.FIRST_NEIGHBOR:
            k = positions[0]
            if not usable[k]:
                raise ZeroLogError(f"Reference neighbor {int(nbrs[0])} of vertex {p} has a zero log map")
        else:
            candidates = positions[usable[positions]]
            if len(candidates) == 0:
                raise ZeroLogError(f"Every neighbor of vertex {p} has a zero log map")
            k = candidates[np.argmin(q_idx[candidates])]
        reference[p] = q_idx[k]
        reference_edge[p] = k

    e1 = logs[reference_edge] / log_norms[reference_edge][:, None]
    e2 = np.cross(normals, e1)
    theta = wrap_angle(
        np.arctan2(
            np.einsum("ij,ij->i", e2[p_idx], logs),
            np.einsum("ij,ij->i", e1[p_idx], logs),
        )
    )
    theta[reference_edge] = 0.0
    return _freeze(
        TangentGeometry(
            mesh=mesh,
            normals=np.asarray(normals, dtype=np.float64),
            e1=e1,
            e2=e2,
            reference=reference,
            reference_edge=reference_edge,
            theta=theta,
            log_norms=log_norms,
        )
    )


def _rotate_into(source: np.ndarray, target: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Apply the minimal rotation taking `source` normals onto `target` normals to `vectors`."""
    w = np.cross(source, target)
    c = np.einsum("ij,ij->i", source, target)
    if np.any(1.0 + c <= _ANTIPODAL):
        raise AntipodalNormalsError("Adjacent normals are antipodal; the aligning rotation is undefined")
    wx = np.einsum("ij,ij->i", w, vectors)
    return c[:, None] * vectors + np.cross(w, vectors) + (wx / (1.0 + c))[:, None] * w


def parallel_transporter(geom: TangentGeometry, q: int, p: int) -> float:
    """Angle g_{q->p} taking features in the gauge at q to the gauge at p.

    The tangent plane at q is aligned with the plane at p by the minimal rotation
    R_qp taking n_q to n_p; g_{q->p} is the angle of R_qp e1_q in the frame at p.

    Raises:
        AntipodalNormalsError: If n_q is (numerically) -n_p
        NotANeighborError: If p and q are not adjacent
    """
    geom.edge_position(p, q)
    idx_p, idx_q = np.array([p]), np.array([q])
    moved = _rotate_into(geom.normals[idx_q], geom.normals[idx_p], geom.e1[idx_q])
    angle = np.arctan2(np.dot(moved[0], geom.e2[p]), np.dot(moved[0], geom.e1[p]))
    return float(wrap_angle(angle))


def with_transporters(geom: TangentGeometry) -> TangentGeometry:
    """Fill g_{q->p} for every directed edge.

    Raises:
        AntipodalNormalsError: If any edge joins antipodal normals
    """
    p, q = geom.edge_index
    moved = _rotate_into(geom.normals[q], geom.normals[p], geom.e1[q])
    transporter = wrap_angle(
        np.arctan2(np.einsum("ij,ij->i", moved, geom.e2[p]), np.einsum("ij,ij->i", moved, geom.e1[p]))
    )
    return _freeze(replace(geom, transporter=transporter))


def build_geometry(
    mesh: Mesh, reference_choice: ReferenceChoice | str = ReferenceChoice.LOWEST_INDEX
) -> TangentGeometry:
    """Normals, frames, angles and transporters in one pass."""
    geom = with_transporters(build_frames(mesh, vertex_normals(mesh), reference_choice))
    logger.debug("Built tangent geometry for %d vertices, %d directed edges", mesh.n_vertices, len(geom.theta))
    return geom


def apply_gauge_changes(geom: TangentGeometry, new_references: Sequence[int]) -> tuple[TangentGeometry, np.ndarray]:
    """Re-anchor the gauge of every vertex at a new reference neighbor.

    Args:
        geom: Geometry with transporters
        new_references: (V,) neighbor index per vertex; passing `geom.reference` is the identity

    Returns:
        (updated geometry, phi) where phi[p] is the old angle of the new reference at p

    Raises:
        NotANeighborError: If a requested reference is not adjacent
    """
    new_references = np.asarray(new_references, dtype=np.int64)
    if new_references.shape != (geom.n_vertices,):
        raise ValueError(f"Expected {geom.n_vertices} references, got shape {new_references.shape}")
    new_edges = np.empty(geom.n_vertices, dtype=np.int64)
    for p, d in enumerate(new_references.tolist()):
        new_edges[p] = geom.reference_edge[p] if d == geom.reference[p] else geom.edge_position(p, d)
    phi = geom.theta[new_edges].copy()
    return _rotated(geom, phi, new_references, new_edges), phi


def gauge_change(geom: TangentGeometry, p: int, new_reference: int) -> tuple[TangentGeometry, float]:
    """Change the gauge at a single vertex.

    Returns:
        (updated geometry, phi) with phi the old angle of `new_reference` at p

    Raises:
        NotANeighborError: If new_reference is not adjacent to p
    """
    references = geom.reference.copy()
    references[p] = new_reference
    updated, phi = apply_gauge_changes(geom, references)
    return updated, float(phi[p])


def _rotated(geom: TangentGeometry, phi: np.ndarray, references: np.ndarray, reference_edges: np.ndarray) -> TangentGeometry:
    cos, sin = np.cos(phi)[:, None], np.sin(phi)[:, None]
    e1 = cos * geom.e1 + sin * geom.e2
    e2 = -sin * geom.e1 + cos * geom.e2
    p, q = geom.edge_index
    theta = wrap_angle(geom.theta - phi[p])
    theta[reference_edges] = 0.0
    transporter = None
    if geom.transporter is not None:
        transporter = wrap_angle(geom.transporter - phi[p] + phi[q])
    return _freeze(
        replace(
            geom,
            e1=e1,
            e2=e2,
            reference=references.copy(),
            reference_edge=reference_edges.copy(),
            theta=theta,
            transporter=transporter,
        )
    )


def _freeze(geom: TangentGeometry) -> TangentGeometry:
    for name in ("normals", "e1", "e2", "reference", "reference_edge", "theta", "log_norms", "transporter"):
        value = getattr(geom, name)
        if value is not None:
            value.setflags(write=False)
    return geom
