"""Read and write triangle meshes in OFF and OBJ format."""
import logging
from pathlib import Path

import numpy as np

from geometry.errors import NonTriangularError, ParseError
from geometry.mesh import Mesh, build_mesh

logger = logging.getLogger(__name__)

MESH_FORMATS = ("OFF", "OBJ")


def load_mesh(raw: bytes | str, fmt: str) -> Mesh:
    """Parse mesh file content and return a validated Mesh.

    Args:
        raw: File content (bytes are decoded as UTF-8)
        fmt: "OFF" or "OBJ" (case-insensitive)

    Returns:
        Validated, consistently oriented Mesh

    Raises:
        ParseError: If the content is malformed or the format is unknown
        NonTriangularError: If a face is not a triangle
        MeshError: Any validation failure raised by `build_mesh`
    """
    if isinstance(raw, bytes):
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"Mesh content is not valid UTF-8 (byte {exc.start})") from None
    else:
        text = raw
    fmt = fmt.strip().upper()
    if fmt == "OFF":
        vertices, faces = _parse_off(text)
    elif fmt == "OBJ":
        vertices, faces = _parse_obj(text)
    else:
        raise ParseError(f"Unknown mesh format {fmt!r}, expected one of {MESH_FORMATS}")
    mesh = build_mesh(vertices, faces)
    logger.debug("Loaded %s mesh: %d vertices, %d faces", fmt, mesh.n_vertices, mesh.n_faces)
    return mesh


def read_mesh(path: str | Path) -> Mesh:
    """Load a mesh file, inferring the format from the suffix.

    Args:
        path: Path ending in .off or .obj

    Returns:
        Validated Mesh

    Raises:
        ParseError: If the suffix is not a supported format
    """
    path = Path(path)
    fmt = path.suffix.lstrip(".").upper()
    if fmt not in MESH_FORMATS:
        raise ParseError(f"Cannot infer mesh format from {path.name!r}")
    return load_mesh(path.read_bytes(), fmt)


def save_off(mesh: Mesh, path: str | Path) -> None:
    """Write mesh as OFF with full float64 precision."""
    lines = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {len(mesh.edges)}"]
    lines.extend(" ".join(repr(float(c)) for c in v) for v in mesh.vertices)
    lines.extend("3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _content_lines(text: str) -> list[str]:
    lines = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    return lines


def _parse_off(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = _content_lines(text)
    if not lines or not lines[0].upper().startswith("OFF"):
        raise ParseError("OFF content must start with an 'OFF' header")

    header_rest = lines[0][3:].split()
    body = lines[1:]
    if header_rest:
        counts_tokens = header_rest
    else:
        if not body:
            raise ParseError("OFF content is missing the count line")
        counts_tokens = body[0].split()
        body = body[1:]
    try:
        n_vertices, n_faces = int(counts_tokens[0]), int(counts_tokens[1])
    except (IndexError, ValueError):
        raise ParseError(f"Malformed OFF count line: {' '.join(counts_tokens)!r}") from None
    if len(body) < n_vertices + n_faces:
        raise ParseError(f"OFF declares {n_vertices} vertices and {n_faces} faces but has {len(body)} data lines")

    vertices = np.empty((n_vertices, 3), dtype=np.float64)
    for i, line in enumerate(body[:n_vertices]):
        tokens = line.split()
        try:
            vertices[i] = [float(t) for t in tokens[:3]]
        except ValueError:
            raise ParseError(f"Malformed OFF vertex line {i}: {line!r}") from None
        if len(tokens) < 3:
            raise ParseError(f"OFF vertex line {i} has fewer than 3 coordinates")

    faces = np.empty((n_faces, 3), dtype=np.int64)
    for i, line in enumerate(body[n_vertices:n_vertices + n_faces]):
        try:
            tokens = [int(t) for t in line.split()]
        except ValueError:
            raise ParseError(f"Malformed OFF face line {i}: {line!r}") from None
        if not tokens or len(tokens) < tokens[0] + 1:
            raise ParseError(f"OFF face line {i} is truncated: {line!r}")
        if tokens[0] != 3:
            raise NonTriangularError(f"OFF face {i} has {tokens[0]} vertices")
        faces[i] = tokens[1:4]
    return vertices, faces


def _obj_index(token: str, n_vertices: int) -> int:
    index = int(token.split("/", 1)[0])
    if index < 0:
        return n_vertices + index
    return index - 1


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for number, line in enumerate(_content_lines(text), start=1):
        tokens = line.split()
        record = tokens[0]
        if record == "v":
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise ParseError(f"Malformed OBJ vertex on line {number}: {line!r}") from None
            if len(tokens) < 4:
                raise ParseError(f"OBJ vertex on line {number} has fewer than 3 coordinates")
        elif record == "f":
            corners = tokens[1:]
            if len(corners) != 3:
                raise NonTriangularError(f"OBJ face on line {number} has {len(corners)} vertices")
            try:
                faces.append([_obj_index(t, len(vertices)) for t in corners])
            except ValueError:
                raise ParseError(f"Malformed OBJ face on line {number}: {line!r}") from None
    if not vertices:
        raise ParseError("OBJ content has no vertices")
    return np.asarray(vertices, dtype=np.float64), np.asarray(faces, dtype=np.int64).reshape(-1, 3)
