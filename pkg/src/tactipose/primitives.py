"""Bundled desk-scale primitive meshes used by the evaluation suite.

All generators return watertight meshes centered on the origin with
outward-facing normals, in meters.  ``primitive_suite`` is the default
object set for experiments; any external OBJ/PLY can be used instead.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

# Faces of a unit box as vertex-index quads with outward CCW winding.
_BOX_QUADS = [
    (0, 1, 3, 2),  # -x
    (4, 6, 7, 5),  # +x
    (0, 4, 5, 1),  # -y
    (2, 3, 7, 6),  # +y
    (0, 2, 6, 4),  # -z
    (1, 5, 7, 3),  # +z
]


def box(size_x: float = 0.09, size_y: float = 0.06, size_z: float = 0.03) -> TriMesh:
    """Axis-aligned rectangular box centered at the origin."""
    hx, hy, hz = size_x / 2.0, size_y / 2.0, size_z / 2.0
    verts = np.array([
        [sx, sy, sz]
        for sx in (-hx, hx) for sy in (-hy, hy) for sz in (-hz, hz)
    ])
    tris = []
    for a, b, c, d in _BOX_QUADS:
        tris.append([a, b, c])
        tris.append([a, c, d])
    return TriMesh(verts, np.asarray(tris))


def cube(size: float = 0.06) -> TriMesh:
    return box(size, size, size)


def cylinder(radius: float = 0.035, height: float = 0.10, segments: int = 48) -> TriMesh:
    """Closed cylinder with its axis along z."""
    hz = height / 2.0
    ang = 2.0 * np.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    verts = [[x, y, -hz] for x, y in ring] + [[x, y, hz] for x, y in ring]
    verts += [[0.0, 0.0, -hz], [0.0, 0.0, hz]]
    bot_c, top_c = 2 * segments, 2 * segments + 1
    tris = []
    for i in range(segments):
        j = (i + 1) % segments
        # side (outward)
        tris.append([i, j, segments + j])
        tris.append([i, segments + j, segments + i])
        # caps
        tris.append([bot_c, j, i])
        tris.append([top_c, segments + i, segments + j])
    return TriMesh(np.asarray(verts), np.asarray(tris))


def icosphere(radius: float = 0.04, subdivisions: int = 3) -> TriMesh:
    """Sphere from a subdivided icosahedron (20 * 4^subdivisions faces)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=float)
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    tris = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    verts = [tuple(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}
        new_tris = []

        def midpoint(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                p = np.array(verts[i]) + np.array(verts[j])
                p /= np.linalg.norm(p)
                verts.append(tuple(p))
                cache[key] = len(verts) - 1
            return cache[key]

        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_tris += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        tris = new_tris
    return TriMesh(np.asarray(verts) * radius, np.asarray(tris))


def l_bracket(leg: float = 0.08, thickness: float = 0.025, depth: float = 0.05) -> TriMesh:
    """Concave L-shaped prism (an L cross-section in xz extruded along y)."""
    t = thickness
    # L boundary with a collinear helper vertex at (0, t) so every boundary
    # edge matches exactly one side wall (no T-junctions).
    poly = [
        (0.0, 0.0), (leg, 0.0), (leg, t), (t, t), (t, leg), (0.0, leg), (0.0, t),
    ]
    cx = leg / 2.0
    cz = leg / 2.0
    hy = depth / 2.0
    n = len(poly)
    verts = [[x - cx, hy, z - cz] for x, z in poly]       # front (+y)
    verts += [[x - cx, -hy, z - cz] for x, z in poly]     # back (-y)
    # cap triangulation in polygon order; every polygon edge appears exactly
    # once on its boundary
    caps = [(0, 1, 2), (0, 2, 3), (0, 3, 6), (6, 3, 4), (6, 4, 5)]
    tris = [(a, c, b) for a, b, c in caps]                # front, flipped
    tris += [(a + n, b + n, c + n) for a, b, c in caps]   # back
    for i in range(n):
        j = (i + 1) % n
        # side wall for boundary edge i->j
        tris.append((i, j, n + j))
        tris.append((i, n + j, n + i))
    mesh = TriMesh(np.asarray(verts, dtype=float), np.asarray(tris))
    if mesh.signed_volume() < 0:
        mesh = TriMesh(mesh.vertices, mesh.triangles[:, [0, 2, 1]])
    return mesh


def primitive_suite() -> dict[str, TriMesh]:
    """The five bundled evaluation objects."""
    return {
        "cube": cube(),
        "box": box(),
        "cylinder": cylinder(),
        "sphere": icosphere(),
        "l_bracket": l_bracket(),
    }


def make_primitive(name: str) -> TriMesh:
    suite = {
        "cube": cube, "box": box, "cylinder": cylinder,
        "sphere": icosphere, "l_bracket": l_bracket,
    }
    if name not in suite:
        raise ValueError(f"unknown primitive {name!r}; options: {sorted(suite)}")
    return suite[name]()
