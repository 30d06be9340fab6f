"""Manifold triangle mesh container and validation."""
import logging
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from geometry.errors import (
    DegenerateFaceError,
    IsolatedVertexError,
    NonManifoldError,
    NonOrientableError,
    NonTriangularError,
    ParseError,
)

logger = logging.getLogger(__name__)

# Faces whose doubled area falls below this fraction of the squared longest edge are degenerate.
_AREA_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class Mesh:
    """Validated, consistently oriented triangle mesh.

    Instances are immutable: coordinate and face arrays are read-only and all
    derived connectivity is computed once on first access.

    Attributes:
        vertices: (V, 3) float64 coordinates
        faces: (F, 3) int64 vertex indices, consistently wound
    """

    vertices: np.ndarray
    faces: np.ndarray

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_faces(self) -> int:
        return int(self.faces.shape[0])

    @cached_property
    def edges(self) -> np.ndarray:
        """Undirected edges as (E, 2) index pairs with i < j, sorted lexicographically."""
        pairs = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]], self.faces[:, [2, 0]]])
        pairs = np.sort(pairs, axis=1)
        edges = np.unique(pairs, axis=0)
        edges.setflags(write=False)
        return edges

    @cached_property
    def neighbors(self) -> tuple[np.ndarray, ...]:
        """Per-vertex neighbor lists N_b in order of first appearance along the face list."""
        lists: list[list[int]] = [[] for _ in range(self.n_vertices)]
        seen: list[set[int]] = [set() for _ in range(self.n_vertices)]
        for a, b, c in self.faces.tolist():
            for u, v in ((a, b), (b, c), (c, a)):
                if v not in seen[u]:
                    seen[u].add(v)
                    lists[u].append(v)
                if u not in seen[v]:
                    seen[v].add(u)
                    lists[v].append(u)
        result = []
        for items in lists:
            arr = np.asarray(items, dtype=np.int64)
            arr.setflags(write=False)
            result.append(arr)
        return tuple(result)

    @cached_property
    def edge_index(self) -> np.ndarray:
        """Directed edges as a (2, 2E) array: row 0 is the center p, row 1 the neighbor q.

        Edges are grouped by center vertex and follow the order of `neighbors`.
        """
        centers = np.concatenate([np.full(len(nbrs), p, dtype=np.int64) for p, nbrs in enumerate(self.neighbors)])
        others = np.concatenate(self.neighbors).astype(np.int64)
        index = np.stack([centers, others])
        index.setflags(write=False)
        return index

    @cached_property
    def reverse_edge(self) -> np.ndarray:
        """For each directed edge (p, q), the position of (q, p) in `edge_index`."""
        p, q = self.edge_index
        lookup = {(int(a), int(b)): k for k, (a, b) in enumerate(zip(p, q))}
        reverse = np.array([lookup[(int(b), int(a))] for a, b in zip(p, q)], dtype=np.int64)
        reverse.setflags(write=False)
        return reverse

    @cached_property
    def face_areas(self) -> np.ndarray:
        areas = 0.5 * np.linalg.norm(_face_cross(self.vertices, self.faces), axis=1)
        areas.setflags(write=False)
        return areas

    @property
    def total_area(self) -> float:
        return float(self.face_areas.sum())

    @cached_property
    def mean_edge_length(self) -> float:
        a, b = self.edges[:, 0], self.edges[:, 1]
        return float(np.linalg.norm(self.vertices[a] - self.vertices[b], axis=1).mean())

    def with_vertices(self, vertices: np.ndarray) -> "Mesh":
        """Return a mesh with the same connectivity and new coordinates.

        Raises:
            DegenerateFaceError: If a face has zero area at the new coordinates
        """
        vertices = np.array(vertices, dtype=np.float64)
        if vertices.shape != self.vertices.shape:
            raise ValueError(f"Expected vertices of shape {self.vertices.shape}, got {vertices.shape}")
        _check_face_areas(vertices, self.faces)
        return _frozen(vertices, self.faces)


def build_mesh(vertices, faces) -> Mesh:
    """Validate raw arrays and build a consistently oriented Mesh.

    Args:
        vertices: (V, 3) coordinates
        faces: (F, 3) vertex indices

    Returns:
        Validated Mesh with windings made globally consistent

    Raises:
        NonTriangularError: If faces is not an (F, 3) array
        ParseError: If a face references a missing vertex
        DegenerateFaceError: If a face repeats a vertex or has zero area
        NonManifoldError: If an edge belongs to more than two faces
        IsolatedVertexError: If a vertex has no incident face
        NonOrientableError: If no consistent winding exists
    """
    vertices = np.asarray(vertices, dtype=np.float64)
    if vertices.ndim != 2 or vertices.shape[1] != 3:
        raise ParseError(f"Vertices must have shape (V, 3), got {vertices.shape}")
    if not np.all(np.isfinite(vertices)):
        raise ParseError("Vertex coordinates must be finite")
    faces = np.asarray(faces)
    if faces.ndim != 2 or faces.shape[1] != 3:
        raise NonTriangularError(f"Faces must have shape (F, 3), got {faces.shape}")
    if faces.shape[0] == 0:
        raise ParseError("Mesh has no faces")
    faces = faces.astype(np.int64)

    n_vertices = vertices.shape[0]
    bad = np.flatnonzero((faces < 0).any(axis=1) | (faces >= n_vertices).any(axis=1))
    if len(bad):
        raise ParseError(f"Face {int(bad[0])} references a vertex outside 0..{n_vertices - 1}")
    repeated = np.flatnonzero(
        (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 2] == faces[:, 0])
    )
    if len(repeated):
        raise DegenerateFaceError(f"Face {int(repeated[0])} repeats a vertex: {faces[repeated[0]].tolist()}")

    pairs = np.sort(np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]]), axis=1)
    unique_pairs, counts = np.unique(pairs, axis=0, return_counts=True)
    if counts.max() > 2:
        offender = unique_pairs[np.argmax(counts)]
        raise NonManifoldError(
            f"Edge ({int(offender[0])}, {int(offender[1])}) belongs to {int(counts.max())} faces"
        )

    used = np.zeros(n_vertices, dtype=bool)
    used[faces.reshape(-1)] = True
    if not used.all():
        raise IsolatedVertexError(f"Vertex {int(np.flatnonzero(~used)[0])} has no incident face")

    _check_face_areas(vertices, faces)
    faces = _orient_faces(vertices, faces)
    return _frozen(vertices, faces)


def _frozen(vertices: np.ndarray, faces: np.ndarray) -> Mesh:
    vertices = np.array(vertices, dtype=np.float64)
    faces = np.array(faces, dtype=np.int64)
    vertices.setflags(write=False)
    faces.setflags(write=False)
    return Mesh(vertices=vertices, faces=faces)


def _face_cross(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    return np.cross(v1 - v0, v2 - v0)


def _check_face_areas(vertices: np.ndarray, faces: np.ndarray) -> None:
    doubled = np.linalg.norm(_face_cross(vertices, faces), axis=1)
    v0 = vertices[faces[:, 0]]
    v1 = vertices[faces[:, 1]]
    v2 = vertices[faces[:, 2]]
    longest = np.max(
        np.stack(
            [
                np.sum((v1 - v0) ** 2, axis=1),
                np.sum((v2 - v1) ** 2, axis=1),
                np.sum((v0 - v2) ** 2, axis=1),
            ]
        ),
        axis=0,
    )
    degenerate = np.flatnonzero(doubled <= _AREA_TOLERANCE * longest)
    if len(degenerate):
        raise DegenerateFaceError(f"Face {int(degenerate[0])} has zero area")


def _has_directed_edge(face, u: int, v: int) -> bool:
    a, b, c = face
    return (a, b) == (u, v) or (b, c) == (u, v) or (c, a) == (u, v)


def _orient_faces(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Flip face windings so that every shared edge is traversed in opposite directions.

    Faces are flooded breadth-first per connected component. Closed components are
    additionally flipped as a whole when their signed volume is negative, so that
    normals point outward.
    """
    faces = [tuple(f) for f in faces.tolist()]
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for f, (a, b, c) in enumerate(faces):
        for u, v in ((a, b), (b, c), (c, a)):
            edge_faces.setdefault((min(u, v), max(u, v)), []).append(f)

    visited = [False] * len(faces)
    flipped = 0
    components: list[list[int]] = []
    for start in range(len(faces)):
        if visited[start]:
            continue
        visited[start] = True
        component = [start]
        queue = deque([start])
        while queue:
            f = queue.popleft()
            a, b, c = faces[f]
            for u, v in ((a, b), (b, c), (c, a)):
                for g in edge_faces[(min(u, v), max(u, v))]:
                    if g == f:
                        continue
                    same_direction = _has_directed_edge(faces[g], u, v)
                    if not visited[g]:
                        if same_direction:
                            x, y, z = faces[g]
                            faces[g] = (x, z, y)
                            flipped += 1
                        visited[g] = True
                        component.append(g)
                        queue.append(g)
                    elif same_direction:
                        raise NonOrientableError(
                            f"Faces {f} and {g} cannot be wound consistently across edge ({u}, {v})"
                        )
        components.append(component)

    result = np.asarray(faces, dtype=np.int64)
    for component in components:
        comp_faces = result[component]
        pairs = np.sort(
            np.concatenate([comp_faces[:, [0, 1]], comp_faces[:, [1, 2]], comp_faces[:, [2, 0]]]), axis=1
        )
        _, counts = np.unique(pairs, axis=0, return_counts=True)
        if np.all(counts == 2):
            v0 = vertices[comp_faces[:, 0]]
            v1 = vertices[comp_faces[:, 1]]
            v2 = vertices[comp_faces[:, 2]]
            volume = np.einsum("ij,ij->i", v0, np.cross(v1, v2)).sum() / 6.0
            if volume < 0:
                result[component] = comp_faces[:, [0, 2, 1]]
                flipped += len(component)
    if flipped:
        logger.debug("Re-oriented %d face windings across %d component(s)", flipped, len(components))
    return result
