"""Procedural meshes for desk-scale datasets and tests."""
import math
from pathlib import Path

import numpy as np

from data.mesh_io import read_mesh
from geometry.errors import ParseError
from geometry.mesh import Mesh, build_mesh
from geometry.roughness import perturb_roughness


def tetrahedron(scale: float = 1.0) -> Mesh:
    """Regular tetrahedron inscribed in the cube [-scale, scale]^3."""
    vertices = scale * np.array(
        [[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]]
    )
    faces = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return build_mesh(vertices, faces)


def icosphere(subdivisions: int = 3, radius: float = 1.0) -> Mesh:
    """Subdivided icosahedron projected onto a sphere.

    Args:
        subdivisions: Number of 1-to-4 subdivision passes (0 gives the icosahedron)
        radius: Sphere radius

    Returns:
        Mesh with 10 * 4**subdivisions + 2 vertices (642 for 3 subdivisions)
    """
    if subdivisions < 0:
        raise ValueError(f"subdivisions must be >= 0, got {subdivisions}")
    t = (1.0 + math.sqrt(5.0)) / 2.0
    vertices = [
        [-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
        [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
        [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1],
    ]
    vertices = [list(np.asarray(v, dtype=np.float64) / np.linalg.norm(v)) for v in vertices]
    faces = [
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ]
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoint_cache:
                m = np.add(vertices[a], vertices[b]) / 2.0
                vertices.append(list(m / np.linalg.norm(m)))
                midpoint_cache[key] = len(vertices) - 1
            return midpoint_cache[key]

        refined = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            refined.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]])
        faces = refined
    return build_mesh(radius * np.asarray(vertices), np.asarray(faces))


def uv_sphere(theta_resolution: int = 30, phi_resolution: int = 30, radius: float = 0.5) -> Mesh:
    """Latitude/longitude sphere with (phi_resolution - 2) * theta_resolution + 2 vertices.

    The defaults give the 842-vertex sphere used for the Cahn-Hilliard desk dataset.
    """
    if theta_resolution < 3 or phi_resolution < 3:
        raise ValueError("theta_resolution and phi_resolution must both be >= 3")
    rings = phi_resolution - 2
    vertices = [[0.0, 0.0, radius]]
    for j in range(1, rings + 1):
        polar = math.pi * j / (phi_resolution - 1)
        for i in range(theta_resolution):
            azimuth = 2.0 * math.pi * i / theta_resolution
            vertices.append(
                [
                    radius * math.sin(polar) * math.cos(azimuth),
                    radius * math.sin(polar) * math.sin(azimuth),
                    radius * math.cos(polar),
                ]
            )
    vertices.append([0.0, 0.0, -radius])
    south = len(vertices) - 1

    def ring(j: int, i: int) -> int:
        return 1 + j * theta_resolution + (i % theta_resolution)

    faces = []
    for i in range(theta_resolution):
        faces.append([0, ring(0, i), ring(0, i + 1)])
        faces.append([south, ring(rings - 1, i + 1), ring(rings - 1, i)])
    for j in range(rings - 1):
        for i in range(theta_resolution):
            a, b = ring(j, i), ring(j, i + 1)
            c, d = ring(j + 1, i), ring(j + 1, i + 1)
            faces.append([a, c, d])
            faces.append([a, d, b])
    return build_mesh(np.asarray(vertices), np.asarray(faces))


def flat_patch(rings: int = 2, spacing: float = 1.0) -> Mesh:
    """Planar hexagonal patch of equilateral triangles in the z=0 plane.

    Vertex 0 is the patch center; every vertex within `rings - 1` hops of it is interior.
    """
    if rings < 1:
        raise ValueError(f"rings must be >= 1, got {rings}")

    def hex_distance(q: int, r: int) -> int:
        return (abs(q) + abs(r) + abs(q + r)) // 2

    coords = [
        (q, r)
        for q in range(-rings, rings + 1)
        for r in range(-rings, rings + 1)
        if hex_distance(q, r) <= rings
    ]
    coords.sort(key=lambda qr: (hex_distance(*qr), qr[1], qr[0]))
    index = {qr: k for k, qr in enumerate(coords)}
    vertices = np.array(
        [[spacing * (q + r / 2.0), spacing * r * math.sqrt(3.0) / 2.0, 0.0] for q, r in coords]
    )
    faces = []
    for q, r in coords:
        up = [(q, r), (q + 1, r), (q, r + 1)]
        down = [(q + 1, r), (q + 1, r + 1), (q, r + 1)]
        for tri in (up, down):
            if all(corner in index for corner in tri):
                faces.append([index[corner] for corner in tri])
    return build_mesh(vertices, np.asarray(faces))


def mesh_from_source(source: str) -> Mesh:
    """Resolve a mesh source string.

    Args:
        source: "icosphere:<subdivisions>", "uvsphere:<theta>x<phi>", "tetrahedron",
            "flat_patch:<rings>", "rough:<scale>:<seed>:<base source>", or a path
            to an .off/.obj file

    Returns:
        Validated Mesh

    Raises:
        ParseError: If a generator spec is malformed
    """
    name, _, arg = source.partition(":")
    if name == "tetrahedron":
        return tetrahedron()
    if name == "rough":
        return _rough_from_source(source)
    if name not in ("icosphere", "uvsphere", "flat_patch"):
        return read_mesh(Path(source))
    try:
        numbers = [int(x) for x in arg.lower().split("x")] if arg else []
    except ValueError:
        raise ParseError(f"Malformed mesh source {source!r}") from None
    if name == "icosphere":
        return icosphere(*numbers[:1])
    if name == "uvsphere":
        return uv_sphere(*numbers[:2])
    return flat_patch(*numbers[:1])


def rough_source(source: str, scale: float, seed: int) -> str:
    """Source string for `source` with its vertices jittered by `perturb_roughness`."""
    return f"rough:{float(scale)!r}:{int(seed)}:{source}"


def _rough_from_source(source: str) -> Mesh:
    parts = source.split(":", 3)
    if len(parts) != 4 or not parts[3]:
        raise ParseError(f"Rough mesh source {source!r} must read rough:<scale>:<seed>:<base>")
    try:
        scale, seed = float(parts[1]), int(parts[2])
    except ValueError:
        raise ParseError(f"Malformed rough mesh source {source!r}") from None
    if not scale >= 0:
        raise ParseError(f"Roughness scale must be >= 0 in {source!r}")
    return perturb_roughness(mesh_from_source(parts[3]), scale, seed)
