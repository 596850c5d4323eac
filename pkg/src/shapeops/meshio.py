"""Triangle mesh I/O and elementary measures.

Supports plain-text OFF and OBJ files (geometry only). All computations
are float64; meshes are immutable once constructed.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DegenerateFace, IndexOutOfRange, IsolatedVertex, ParseError

DEGENERATE_AREA_THRESHOLD = 1e-12

_FLOAT_FMT = "%.17g"


def _triangle_areas(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    e1 = vertices[faces[:, 1]] - vertices[faces[:, 0]]
    e2 = vertices[faces[:, 2]] - vertices[faces[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


class TriMesh:
    """Triangle mesh given by vertex coordinates and face connectivity.

    Vertex and face arrays are stored read-only; every operation in this
    package treats meshes as immutable values, so instances can be shared
    freely between threads.

    Parameters
    ----------
    vertices : array_like
        (n_v, 3) vertex coordinates.
    faces : array_like
        (n_f, 3) vertex indices per triangle.
    degenerate_area : float, optional
        Faces with area at or below this threshold are rejected. The
        default matches the loader default.

    Raises
    ------
    IndexOutOfRange
        If a face references a vertex outside [0, n_v).
    DegenerateFace
        If a face repeats a vertex or its area falls below threshold.
    """

    def __init__(self, vertices, faces, degenerate_area: float = DEGENERATE_AREA_THRESHOLD):
        vertices = np.array(vertices, dtype=np.float64)
        faces = np.array(faces, dtype=np.int64)
        if faces.size == 0:
            faces = faces.reshape(0, 3)
        if vertices.ndim != 2 or vertices.shape[1] != 3:
            raise ValueError(f"vertices must have shape (n, 3), got {vertices.shape}")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise ValueError(f"faces must have shape (n, 3), got {faces.shape}")
        if faces.size:
            if faces.min() < 0 or faces.max() >= len(vertices):
                raise IndexOutOfRange(f"face indices must lie in [0, {len(vertices)})")
            repeated = (
                (faces[:, 0] == faces[:, 1])
                | (faces[:, 1] == faces[:, 2])
                | (faces[:, 2] == faces[:, 0])
            )
            if repeated.any():
                raise DegenerateFace("face with a repeated vertex index")
            areas = _triangle_areas(vertices, faces)
            if not np.isfinite(areas).all() or (areas <= degenerate_area).any():
                raise DegenerateFace(f"face with area <= {degenerate_area}")
        vertices.setflags(write=False)
        faces.setflags(write=False)
        self.vertices = vertices
        self.faces = faces

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def face_areas(self) -> np.ndarray:
        """Areas of all triangles, shape (n_f,)."""
        return _triangle_areas(self.vertices, self.faces)

    def bounding_box_diagonal(self) -> float:
        """Length of the axis-aligned bounding box diagonal."""
        return float(np.linalg.norm(self.vertices.max(axis=0) - self.vertices.min(axis=0)))

    def __repr__(self) -> str:
        return f"TriMesh(n_vertices={self.n_vertices}, n_faces={self.n_faces})"


def vertex_areas(mesh: TriMesh) -> np.ndarray:
    """Lumped per-vertex areas: one third of the incident triangle areas.

    The entries sum to the total surface area.

    Raises
    ------
    IsolatedVertex
        If some vertex has no incident face (its area would be zero).
    """
    areas = mesh.face_areas()
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.faces, (areas / 3.0)[:, None])
    if (out <= 0.0).any():
        bad = int(np.argmin(out))
        raise IsolatedVertex(f"vertex {bad} has no incident face")
    return out


def mesh_volume(mesh: TriMesh) -> float:
    """Signed volume via the divergence theorem.

    For a closed, consistently outward-oriented mesh this equals the
    enclosed volume; open meshes return the signed sum, which the caller
    interprets.
    """
    v = mesh.vertices
    f = mesh.faces
    dets = np.einsum("ij,ij->i", v[f[:, 0]], np.cross(v[f[:, 1]], v[f[:, 2]]))
    return float(dets.sum() / 6.0)


def edge_lengths(mesh: TriMesh) -> dict[tuple[int, int], float]:
    """Lengths of all undirected edges appearing in any face.

    Keys are index pairs (i, j) with i < j.
    """
    f = mesh.faces
    pairs = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    pairs.sort(axis=1)
    pairs = np.unique(pairs, axis=0)
    lengths = np.linalg.norm(
        mesh.vertices[pairs[:, 0]] - mesh.vertices[pairs[:, 1]], axis=1
    )
    return {(int(i), int(j)): float(l) for (i, j), l in zip(pairs, lengths)}


def _strip_comments(text: str) -> list[str]:
    tokens = []
    for line in text.splitlines():
        hash_pos = line.find("#")
        if hash_pos >= 0:
            line = line[:hash_pos]
        tokens.extend(line.split())
    return tokens


def _parse_off(text: str, degenerate_area: float) -> TriMesh:
    tokens = _strip_comments(text)
    if not tokens or tokens[0] != "OFF":
        raise ParseError("missing OFF header")
    pos = 1
    try:
        n_v, n_f = int(tokens[pos]), int(tokens[pos + 1])
        pos += 3  # skip the (unused) edge count
        verts = np.array(tokens[pos : pos + 3 * n_v], dtype=np.float64).reshape(n_v, 3)
        pos += 3 * n_v
        faces = np.empty((n_f, 3), dtype=np.int64)
        for i in range(n_f):
            count = int(tokens[pos])
            if count != 3:
                raise ParseError(f"face {i} has {count} vertices, only triangles supported")
            faces[i] = [int(t) for t in tokens[pos + 1 : pos + 4]]
            pos += 4
    except (ValueError, IndexError) as exc:
        raise ParseError(f"malformed OFF file: {exc}") from exc
    return TriMesh(verts, faces, degenerate_area)


def _parse_obj(text: str, degenerate_area: float) -> TriMesh:
    verts = []
    faces = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        hash_pos = raw.find("#")
        if hash_pos >= 0:
            raw = raw[:hash_pos]
        fields = raw.split()
        if not fields:
            continue
        tag = fields[0]
        if tag == "v":
            if len(fields) < 4:
                raise ParseError(f"line {lineno}: vertex needs 3 coordinates")
            try:
                verts.append([float(x) for x in fields[1:4]])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
        elif tag == "f":
            if len(fields) != 4:
                raise ParseError(f"line {lineno}: only triangular faces supported")
            try:
                # "i", "i/t" and "i/t/n" forms all start with the vertex index
                faces.append([int(x.split("/")[0]) - 1 for x in fields[1:4]])
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from exc
        # normals, texture coords, groups, materials are skipped silently
    if not verts:
        raise ParseError("OBJ file contains no vertices")
    return TriMesh(np.array(verts), np.array(faces, dtype=np.int64).reshape(-1, 3), degenerate_area)


def _infer_format(path: str, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("off", "obj"):
            raise ValueError(f"unsupported mesh format {fmt!r}")
        return fmt
    ext = os.path.splitext(path)[1].lower()
    if ext in (".off", ".obj"):
        return ext[1:]
    raise ValueError(f"cannot infer mesh format from {path!r}")


def load_mesh(path, fmt: str | None = None,
              degenerate_area: float = DEGENERATE_AREA_THRESHOLD) -> TriMesh:
    """Load a triangle mesh from an OFF or OBJ file.

    Parameters
    ----------
    path : str or os.PathLike
        File to read.
    fmt : {"off", "obj"}, optional
        Explicit format; inferred from the extension when omitted.
    degenerate_area : float, optional
        Rejection threshold for sliver faces.

    Raises
    ------
    ParseError, DegenerateFace, IndexOutOfRange
    """
    path = os.fspath(path)
    fmt = _infer_format(path, fmt)
    with open(path, "r") as fh:
        text = fh.read()
    if fmt == "off":
        return _parse_off(text, degenerate_area)
    return _parse_obj(text, degenerate_area)


def save_mesh(mesh: TriMesh, path, fmt: str | None = None) -> None:
    """Write a mesh as OFF or OBJ text.

    Coordinates are written with 17 significant digits so that a
    load/save/load round trip reproduces the vertex array bit for bit.
    """
    path = os.fspath(path)
    fmt = _infer_format(path, fmt)
    lines = []
    if fmt == "off":
        lines.append("OFF")
        lines.append(f"{mesh.n_vertices} {mesh.n_faces} 0")
        for v in mesh.vertices:
            lines.append(" ".join(_FLOAT_FMT % x for x in v))
        for f in mesh.faces:
            lines.append(f"3 {f[0]} {f[1]} {f[2]}")
    else:
        for v in mesh.vertices:
            lines.append("v " + " ".join(_FLOAT_FMT % x for x in v))
        for f in mesh.faces:
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
