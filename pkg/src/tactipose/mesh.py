"""Indexed triangle meshes: loading, validation, and surface sampling.

Meshes are immutable after construction.  Watertightness (every undirected
edge shared by exactly two consistently-oriented triangles) is checked at
load time and cached; signed-distance queries require it, sampling and ray
casting do not, so scan meshes with small holes remain usable for
everything except insideness tests.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

_MIN_AREA = 1e-14  # m^2; faces below this are degenerate


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh with per-face normals and areas (units: meters)."""

    vertices: np.ndarray   # (V, 3) float64
    triangles: np.ndarray  # (F, 3) int64
    face_normals: np.ndarray = None
    face_areas: np.ndarray = None

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vertices, dtype=np.float64))
        t = np.ascontiguousarray(np.asarray(self.triangles, dtype=np.int64))
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshError(f"vertices must be (V, 3), got {v.shape}")
        if t.ndim != 2 or t.shape[1] != 3:
            raise MeshError(f"triangles must be (F, 3), got {t.shape}")
        if t.size and (t.min() < 0 or t.max() >= len(v)):
            raise MeshError("triangle index out of range")
        a = v[t[:, 1]] - v[t[:, 0]]
        b = v[t[:, 2]] - v[t[:, 0]]
        cross = np.cross(a, b)
        double_area = np.linalg.norm(cross, axis=1)
        if np.any(double_area < 2.0 * _MIN_AREA):
            raise MeshError("degenerate face (zero area)")
        normals = cross / double_area[:, None]
        areas = 0.5 * double_area
        for arr in (v, t, normals, areas):
            arr.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        object.__setattr__(self, "face_normals", normals)
        object.__setattr__(self, "face_areas", areas)

    @property
    def n_faces(self) -> int:
        return len(self.triangles)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def is_watertight(self) -> bool:
        cached = self.__dict__.get("_watertight")
        if cached is None:
            cached = _check_watertight(self.triangles)
            object.__setattr__(self, "_watertight", cached)
        return cached

    def signed_volume(self) -> float:
        """Positive when triangles wind outward around the enclosed volume."""
        v = self.vertices
        t = self.triangles
        a, b, c = v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]
        return float(np.einsum("ij,ij->i", a, np.cross(b, c)).sum() / 6.0)

    def transformed(self, pose) -> "TriMesh":
        return TriMesh(pose.apply(self.vertices), self.triangles)


def _check_watertight(triangles: np.ndarray) -> bool:
    if len(triangles) == 0:
        return False
    edges = np.concatenate([
        triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]],
    ])
    # consistent orientation: every directed edge appears exactly once
    directed = {}
    for e0, e1 in edges:
        key = (int(e0), int(e1))
        if key in directed:
            return False
        directed[key] = True
    for e0, e1 in directed:
        if (e1, e0) not in directed:
            return False
    return True


@dataclass(frozen=True)
class SurfaceSample:
    """Point on a mesh face, with the face normal, in the object frame."""

    position: np.ndarray
    normal: np.ndarray
    face_id: int
    sample_id: int


def sample_surface(mesh: TriMesh, m: int, seed: int,
                   farthest_point: bool = False) -> list[SurfaceSample]:
    """Draw ``m`` area-weighted uniform samples on the mesh surface.

    Faces are chosen with probability proportional to area and points are
    uniform in barycentric coordinates, so the density is uniform per unit
    area.  Deterministic for a fixed seed.  With ``farthest_point`` set,
    4*m candidates are drawn and greedily thinned to the m most spread-out
    ones (still deterministic).
    """
    if mesh.n_faces == 0 or len(mesh.vertices) == 0:
        raise MeshError("degenerate mesh")
    if m < 1:
        raise ValueError("m must be >= 1")
    n_draw = 4 * m if farthest_point else m
    rng = make_rng(seed)
    u_face = rng.random(n_draw)
    u1 = rng.random(n_draw)
    u2 = rng.random(n_draw)

    cum = np.cumsum(mesh.face_areas)
    cum /= cum[-1]
    face_ids = np.searchsorted(cum, u_face, side="right")
    face_ids = np.minimum(face_ids, mesh.n_faces - 1)

    tri = mesh.triangles[face_ids]
    a = mesh.vertices[tri[:, 0]]
    b = mesh.vertices[tri[:, 1]]
    c = mesh.vertices[tri[:, 2]]
    s = np.sqrt(u1)
    w0 = 1.0 - s
    w1 = (s * (1.0 - u2))
    w2 = s * u2
    pts = w0[:, None] * a + w1[:, None] * b + w2[:, None] * c

    if farthest_point:
        keep = _farthest_point_indices(pts, m)
        pts = pts[keep]
        face_ids = face_ids[keep]

    return [SurfaceSample(position=pts[i].copy(),
                          normal=mesh.face_normals[face_ids[i]].copy(),
                          face_id=int(face_ids[i]),
                          sample_id=i)
            for i in range(m)]


def _farthest_point_indices(points: np.ndarray, m: int) -> np.ndarray:
    """Greedy farthest-point selection, starting at the lowest-index point."""
    n = len(points)
    if m >= n:
        return np.arange(n)
    chosen = np.empty(m, dtype=np.int64)
    chosen[0] = 0
    dist = np.linalg.norm(points - points[0], axis=1)
    for i in range(1, m):
        nxt = int(np.argmax(dist))
        chosen[i] = nxt
        dist = np.minimum(dist, np.linalg.norm(points - points[nxt], axis=1))
    return chosen


def farthest_point_subsample(points: np.ndarray, m: int) -> np.ndarray:
    """Deterministic farthest-point subset of an (N, 3) array."""
    return points[_farthest_point_indices(np.asarray(points, dtype=float), m)]


# ---------------------------------------------------------------------------
# file formats


def load_mesh(path, scale: float = 1.0) -> TriMesh:
    """Load an ASCII OBJ or a binary little-endian PLY, applying ``scale``."""
    text = str(path)
    if text.lower().endswith(".obj"):
        return load_obj(path, scale)
    if text.lower().endswith(".ply"):
        return load_ply(path, scale)
    raise MeshError(f"unsupported mesh format: {path}")


def load_obj(path, scale: float = 1.0) -> TriMesh:
    """ASCII OBJ reader: v/f records only, polygons fan-triangulated."""
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = []
                for token in parts[1:]:
                    raw = token.split("/")[0]
                    i = int(raw)
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                for k in range(1, len(idx) - 1):
                    faces.append([idx[0], idx[k], idx[k + 1]])
    if not vertices or not faces:
        raise MeshError("degenerate mesh")
    return TriMesh(np.asarray(vertices, dtype=float) * scale, np.asarray(faces))


def save_obj(mesh: TriMesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for t in mesh.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


def load_ply(path, scale: float = 1.0) -> TriMesh:
    """Binary little-endian PLY reader (vertex x/y/z + face index lists)."""
    with open(path, "rb") as fh:
        data = fh.read()
    header_end = data.find(b"end_header\n")
    if header_end < 0 or not data.startswith(b"ply"):
        raise MeshError("not a PLY file")
    header = data[:header_end].decode("ascii", errors="replace").splitlines()
    body = io.BytesIO(data[header_end + len(b"end_header\n"):])

    fmt = None
    elements = []  # (name, count, [(prop_kind, dtype..., name)])
    for line in header[1:]:
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if parts[1] == "list":
                elements[-1][2].append(("list", _PLY_TYPES[parts[2]],
                                        _PLY_TYPES[parts[3]], parts[4]))
            else:
                elements[-1][2].append(("scalar", _PLY_TYPES[parts[1]], parts[2]))
    if fmt != "binary_little_endian":
        raise MeshError(f"unsupported PLY format: {fmt} (binary little-endian only)")

    vertices = None
    faces = []
    for name, count, props in elements:
        if name == "vertex":
            if any(p[0] == "list" for p in props):
                raise MeshError("list properties on vertices are unsupported")
            dtype = np.dtype([(p[2], "<" + p[1]) for p in props])
            rec = np.frombuffer(body.read(dtype.itemsize * count), dtype=dtype)
            vertices = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(float)
        else:
            for _ in range(count):
                row = []
                for p in props:
                    if p[0] == "list":
                        n = int(np.frombuffer(body.read(np.dtype(p[1]).itemsize),
                                              dtype="<" + p[1])[0])
                        item = np.dtype(p[2]).itemsize
                        vals = np.frombuffer(body.read(item * n), dtype="<" + p[2])
                        row.append(vals)
                    else:
                        body.read(np.dtype(p[1]).itemsize)
                if name == "face" and row:
                    idx = [int(i) for i in row[0]]
                    for k in range(1, len(idx) - 1):
                        faces.append([idx[0], idx[k], idx[k + 1]])
    if vertices is None or not faces:
        raise MeshError("degenerate mesh")
    return TriMesh(vertices * scale, np.asarray(faces))


def save_ply_points(path, points: np.ndarray) -> None:
    """Write a binary little-endian PLY point cloud (positions only)."""
    points = np.asarray(points, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(b"ply\nformat binary_little_endian 1.0\n")
        fh.write(f"element vertex {len(points)}\n".encode())
        fh.write(b"property float x\nproperty float y\nproperty float z\n")
        fh.write(b"end_header\n")
        fh.write(points.astype("<f4").tobytes())


def save_ply_mesh(path, mesh: TriMesh) -> None:
    """Write a binary little-endian PLY triangle mesh."""
    with open(path, "wb") as fh:
        fh.write(b"ply\nformat binary_little_endian 1.0\n")
        fh.write(f"element vertex {len(mesh.vertices)}\n".encode())
        fh.write(b"property float x\nproperty float y\nproperty float z\n")
        fh.write(f"element face {mesh.n_faces}\n".encode())
        fh.write(b"property list uchar int vertex_indices\n")
        fh.write(b"end_header\n")
        fh.write(mesh.vertices.astype("<f4").tobytes())
        for t in mesh.triangles:
            fh.write(struct.pack("<B3i", 3, int(t[0]), int(t[1]), int(t[2])))
