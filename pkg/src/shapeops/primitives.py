"""Procedural test meshes: spheres, tori, boxes and flat patches.

All generators are deterministic and return consistently outward-oriented
closed surfaces unless stated otherwise.
"""

from __future__ import annotations

import numpy as np

from .meshio import TriMesh

_PHI = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTICES = np.array(
    [
        (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
        (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
        (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
    ],
    dtype=np.float64,
)

_ICO_FACES = np.array(
    [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ],
    dtype=np.int64,
)


def icosphere(subdivisions: int = 2, radius: float = 1.0) -> TriMesh:
    """Icosahedron refined by edge midpoint subdivision, projected to a sphere.

    Vertex count is 10 * 4**subdivisions + 2.
    """
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTICES]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        midpoint_cache: dict[tuple[int, int], int] = {}

        def midpoint(i, j):
            key = (i, j) if i < j else (j, i)
            if key not in midpoint_cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(verts) - 1
            return midpoint_cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces.extend([(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)])
        faces = new_faces
    return TriMesh(np.array(verts) * radius, np.array(faces, dtype=np.int64))


def torus(n_major: int = 25, n_minor: int = 40, major_radius: float = 1.0,
          minor_radius: float = 0.4) -> TriMesh:
    """Closed torus with n_major * n_minor vertices on a regular grid."""
    u = 2.0 * np.pi * np.arange(n_major) / n_major
    v = 2.0 * np.pi * np.arange(n_minor) / n_minor
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major_radius + minor_radius * np.cos(vv)
    verts = np.stack(
        [ring * np.cos(uu), ring * np.sin(uu), minor_radius * np.sin(vv)], axis=-1
    ).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def cube(side: float = 1.0) -> TriMesh:
    """Axis-aligned cube [0, side]^3 with outward orientation."""
    v = side * np.array(
        [
            (0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
            (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1),
        ],
        dtype=np.float64,
    )
    f = np.array(
        [
            (0, 2, 1), (0, 3, 2),  # bottom
            (4, 5, 6), (4, 6, 7),  # top
            (0, 1, 5), (0, 5, 4),  # front
            (2, 3, 7), (2, 7, 6),  # back
            (0, 4, 7), (0, 7, 3),  # left
            (1, 2, 6), (1, 6, 5),  # right
        ],
        dtype=np.int64,
    )
    return TriMesh(v, f)


def unit_square() -> TriMesh:
    """Unit square in the z = 0 plane, split into two triangles."""
    v = np.array([(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)], dtype=np.float64)
    f = np.array([(0, 1, 2), (0, 2, 3)], dtype=np.int64)
    return TriMesh(v, f)


def equilateral_triangle(side: float = 1.0) -> TriMesh:
    v = side * np.array(
        [(0, 0, 0), (1, 0, 0), (0.5, np.sqrt(3.0) / 2.0, 0)], dtype=np.float64
    )
    return TriMesh(v, np.array([(0, 1, 2)], dtype=np.int64))


def right_triangle() -> TriMesh:
    """Single right triangle (0,0,0), (1,0,0), (0,1,0)."""
    v = np.array([(0, 0, 0), (1, 0, 0), (0, 1, 0)], dtype=np.float64)
    return TriMesh(v, np.array([(0, 1, 2)], dtype=np.int64))
