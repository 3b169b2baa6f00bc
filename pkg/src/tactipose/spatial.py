"""Spatial queries against triangle meshes: ray casts and signed distance.

Ray casts run a watertight ray-triangle test (Woop, Benthin & Wald style,
evaluated in double precision) over a median-split BVH.  Signed distance
is the exact distance to the nearest surface point, with the sign taken
from the generalized winding number, so it requires a watertight mesh.

The BVH and the flat vertex/triangle arrays are built once per mesh and
cached on the mesh object; all query kernels only read them, so batched
queries are safe to run from parallel numba threads.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

from .mesh import MeshError, TriMesh

_T_MIN = 1e-9  # hits closer than this are ignored (self-intersection guard)


# ---------------------------------------------------------------------------
# BVH construction (runs once per mesh, in numpy)


class _Bvh:
    __slots__ = ("node_min", "node_max", "node_left", "node_right",
                 "node_start", "node_count", "tri_order")

    def __init__(self, vertices, triangles, leaf_size=4):
        tri_pts = vertices[triangles]
        tri_min = tri_pts.min(axis=1)
        tri_max = tri_pts.max(axis=1)
        centroids = 0.5 * (tri_min + tri_max)
        order = np.arange(len(triangles), dtype=np.int64)

        node_min, node_max = [], []
        node_left, node_right = [], []
        node_start, node_count = [], []

        def build(lo, hi):
            idx = len(node_min)
            node_min.append(tri_min[order[lo:hi]].min(axis=0))
            node_max.append(tri_max[order[lo:hi]].max(axis=0))
            node_left.append(-1)
            node_right.append(-1)
            node_start.append(lo)
            node_count.append(0)
            if hi - lo <= leaf_size:
                node_count[idx] = hi - lo
                return idx
            cen = centroids[order[lo:hi]]
            axis = int(np.argmax(cen.max(axis=0) - cen.min(axis=0)))
            mid = (lo + hi) // 2
            local = np.argpartition(cen[:, axis], mid - lo)
            order[lo:hi] = order[lo:hi][local]
            node_left[idx] = build(lo, mid)
            node_right[idx] = build(mid, hi)
            return idx

        build(0, len(triangles))
        self.node_min = np.ascontiguousarray(node_min, dtype=np.float64)
        self.node_max = np.ascontiguousarray(node_max, dtype=np.float64)
        self.node_left = np.asarray(node_left, dtype=np.int64)
        self.node_right = np.asarray(node_right, dtype=np.int64)
        self.node_start = np.asarray(node_start, dtype=np.int64)
        self.node_count = np.asarray(node_count, dtype=np.int64)
        self.tri_order = order


def _accel(mesh: TriMesh) -> _Bvh:
    bvh = mesh.__dict__.get("_bvh")
    if bvh is None:
        bvh = _Bvh(mesh.vertices, mesh.triangles)
        object.__setattr__(mesh, "_bvh", bvh)
    return bvh


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, inline="always")
def _component(x, y, z, k):
    if k == 2:
        return z
    if k == 1:
        return y
    return x


@njit(cache=True, inline="always")
def _ray_tri_watertight(ox, oy, oz, kx, ky, kz, sx, sy, sz,
                        vertices, triangles, f):
    """Watertight ray-triangle intersection; returns t or -1.0."""
    i0, i1, i2 = triangles[f, 0], triangles[f, 1], triangles[f, 2]
    ax = vertices[i0, 0] - ox
    ay = vertices[i0, 1] - oy
    az = vertices[i0, 2] - oz
    bx = vertices[i1, 0] - ox
    by = vertices[i1, 1] - oy
    bz = vertices[i1, 2] - oz
    cx = vertices[i2, 0] - ox
    cy = vertices[i2, 1] - oy
    cz = vertices[i2, 2] - oz

    akz = _component(ax, ay, az, kz)
    bkz = _component(bx, by, bz, kz)
    ckz = _component(cx, cy, cz, kz)
    akx = _component(ax, ay, az, kx) - sx * akz
    bkx = _component(bx, by, bz, kx) - sx * bkz
    ckx = _component(cx, cy, cz, kx) - sx * ckz
    aky = _component(ax, ay, az, ky) - sy * akz
    bky = _component(bx, by, bz, ky) - sy * bkz
    cky = _component(cx, cy, cz, ky) - sy * ckz

    u = ckx * bky - cky * bkx
    v = akx * cky - aky * ckx
    w = bkx * aky - bky * akx
    if (u < 0.0 or v < 0.0 or w < 0.0) and (u > 0.0 or v > 0.0 or w > 0.0):
        return -1.0
    det = u + v + w
    if det == 0.0:
        return -1.0
    t_scaled = u * sz * akz + v * sz * bkz + w * sz * ckz
    return t_scaled / det


@njit(cache=True, inline="always")
def _slab_hit(ox, oy, oz, ix, iy, iz, bmin, bmax, t_best):
    t1 = (bmin[0] - ox) * ix
    t2 = (bmax[0] - ox) * ix
    tn = min(t1, t2)
    tf = max(t1, t2)
    t1 = (bmin[1] - oy) * iy
    t2 = (bmax[1] - oy) * iy
    tn = max(tn, min(t1, t2))
    tf = min(tf, max(t1, t2))
    t1 = (bmin[2] - oz) * iz
    t2 = (bmax[2] - oz) * iz
    tn = max(tn, min(t1, t2))
    tf = min(tf, max(t1, t2))
    return tf >= tn and tf >= 0.0 and tn <= t_best


@njit(cache=True)
def _raycast_kernel(origins, dirs, t_min, t_max,
                    vertices, triangles,
                    node_min, node_max, node_left, node_right,
                    node_start, node_count, tri_order,
                    out_t, out_face):
    for r in range(origins.shape[0]):
        ox, oy, oz = origins[r, 0], origins[r, 1], origins[r, 2]
        dx, dy, dz = dirs[r, 0], dirs[r, 1], dirs[r, 2]

        adx, ady, adz = abs(dx), abs(dy), abs(dz)
        if adz >= adx and adz >= ady:
            kz = 2
        elif ady >= adx:
            kz = 1
        else:
            kz = 0
        kx = kz + 1
        if kx == 3:
            kx = 0
        ky = kx + 1
        if ky == 3:
            ky = 0
        dkz = dz if kz == 2 else (dy if kz == 1 else dx)
        if dkz < 0.0:
            kx, ky = ky, kx
        dkx = dz if kx == 2 else (dy if kx == 1 else dx)
        dky = dz if ky == 2 else (dy if ky == 1 else dx)
        sx = dkx / dkz
        sy = dky / dkz
        sz = 1.0 / dkz

        ix = 1.0 / dx if abs(dx) > 1e-300 else (1e300 if dx >= 0 else -1e300)
        iy = 1.0 / dy if abs(dy) > 1e-300 else (1e300 if dy >= 0 else -1e300)
        iz = 1.0 / dz if abs(dz) > 1e-300 else (1e300 if dz >= 0 else -1e300)

        best_t = t_max
        best_f = -1
        stack = np.empty(64, dtype=np.int64)
        top = 0
        stack[0] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top]
            if not _slab_hit(ox, oy, oz, ix, iy, iz,
                             node_min[node], node_max[node], best_t):
                continue
            cnt = node_count[node]
            if cnt > 0:
                start = node_start[node]
                for k in range(start, start + cnt):
                    f = tri_order[k]
                    t = _ray_tri_watertight(ox, oy, oz, kx, ky, kz, sx, sy, sz,
                                            vertices, triangles, f)
                    if t > t_min and t < best_t:
                        best_t = t
                        best_f = f
            else:
                stack[top] = node_left[node]
                stack[top + 1] = node_right[node]
                top += 2
        out_t[r] = best_t if best_f >= 0 else np.inf
        out_face[r] = best_f


@njit(cache=True, parallel=True)
def _raycast_kernel_par(origins, dirs, t_min, t_max,
                        vertices, triangles,
                        node_min, node_max, node_left, node_right,
                        node_start, node_count, tri_order,
                        out_t, out_face):
    n = origins.shape[0]
    chunk = 512
    n_chunks = (n + chunk - 1) // chunk
    for c in prange(n_chunks):
        lo = c * chunk
        hi = min(lo + chunk, n)
        _raycast_kernel(origins[lo:hi], dirs[lo:hi], t_min, t_max,
                        vertices, triangles,
                        node_min, node_max, node_left, node_right,
                        node_start, node_count, tri_order,
                        out_t[lo:hi], out_face[lo:hi])


@njit(cache=True, inline="always")
def _point_tri_sqdist(px, py, pz, vertices, triangles, f):
    """Squared distance from a point to a triangle (Ericson's algorithm)."""
    i0, i1, i2 = triangles[f, 0], triangles[f, 1], triangles[f, 2]
    ax, ay, az = vertices[i0, 0], vertices[i0, 1], vertices[i0, 2]
    bx, by, bz = vertices[i1, 0], vertices[i1, 1], vertices[i1, 2]
    cx, cy, cz = vertices[i2, 0], vertices[i2, 1], vertices[i2, 2]

    abx, aby, abz = bx - ax, by - ay, bz - az
    acx, acy, acz = cx - ax, cy - ay, cz - az
    apx, apy, apz = px - ax, py - ay, pz - az
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return apx * apx + apy * apy + apz * apz
    bpx, bpy, bpz = px - bx, py - by, pz - bz
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return bpx * bpx + bpy * bpy + bpz * bpz
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        qx, qy, qz = apx - v * abx, apy - v * aby, apz - v * abz
        return qx * qx + qy * qy + qz * qz
    cpx, cpy, cpz = px - cx, py - cy, pz - cz
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return cpx * cpx + cpy * cpy + cpz * cpz
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        qx, qy, qz = apx - w * acx, apy - w * acy, apz - w * acz
        return qx * qx + qy * qy + qz * qz
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        qx = bpx - w * (cx - bx)
        qy = bpy - w * (cy - by)
        qz = bpz - w * (cz - bz)
        return qx * qx + qy * qy + qz * qz
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    qx = apx - v * abx - w * acx
    qy = apy - v * aby - w * acy
    qz = apz - v * abz - w * acz
    return qx * qx + qy * qy + qz * qz


@njit(cache=True, inline="always")
def _sd_point(px, py, pz, vertices, triangles):
    """(squared distance, winding number) of one point vs all triangles."""
    best = np.inf
    solid = 0.0
    for f in range(triangles.shape[0]):
        d2 = _point_tri_sqdist(px, py, pz, vertices, triangles, f)
        if d2 < best:
            best = d2
        i0, i1, i2 = triangles[f, 0], triangles[f, 1], triangles[f, 2]
        ax, ay, az = vertices[i0, 0] - px, vertices[i0, 1] - py, vertices[i0, 2] - pz
        bx, by, bz = vertices[i1, 0] - px, vertices[i1, 1] - py, vertices[i1, 2] - pz
        cx, cy, cz = vertices[i2, 0] - px, vertices[i2, 1] - py, vertices[i2, 2] - pz
        la = math.sqrt(ax * ax + ay * ay + az * az)
        lb = math.sqrt(bx * bx + by * by + bz * bz)
        lc = math.sqrt(cx * cx + cy * cy + cz * cz)
        num = (ax * (by * cz - bz * cy)
               - ay * (bx * cz - bz * cx)
               + az * (bx * cy - by * cx))
        den = (la * lb * lc
               + (ax * bx + ay * by + az * bz) * lc
               + (bx * cx + by * cy + bz * cz) * la
               + (cx * ax + cy * ay + cz * az) * lb)
        solid += 2.0 * math.atan2(num, den)
    return best, solid / (4.0 * math.pi)


@njit(cache=True, parallel=True)
def _signed_distance_kernel(points, vertices, triangles, out):
    for i in prange(points.shape[0]):
        d2, wind = _sd_point(points[i, 0], points[i, 1], points[i, 2],
                             vertices, triangles)
        d = math.sqrt(d2)
        out[i] = -d if wind > 0.5 else d


@njit(cache=True)
def _point_face_distance_kernel(px, py, pz, vertices, triangles, out):
    for f in range(triangles.shape[0]):
        out[f] = math.sqrt(_point_tri_sqdist(px, py, pz, vertices, triangles, f))


@njit(cache=True, parallel=True)
def _max_penetration_kernel(rot_ow, trans_ow, proxy_world,
                            vertices, triangles, bb_min, bb_max, out):
    """Deepest proxy-point penetration per object pose.

    rot_ow/trans_ow map object coordinates to world; proxy points are in
    world.  Poses whose bounding spheres cannot reach the proxy cloud are
    skipped wholesale; points outside the object's AABB cannot be inside
    the mesh and are skipped before the exact query.
    """
    n_pose = rot_ow.shape[0]
    n_pts = proxy_world.shape[0]
    # bounding spheres of the mesh (about the AABB center) and proxy cloud
    cx = 0.5 * (bb_min[0] + bb_max[0])
    cy = 0.5 * (bb_min[1] + bb_max[1])
    cz = 0.5 * (bb_min[2] + bb_max[2])
    r_mesh = 0.5 * math.sqrt((bb_max[0] - bb_min[0]) ** 2
                             + (bb_max[1] - bb_min[1]) ** 2
                             + (bb_max[2] - bb_min[2]) ** 2)
    px_c = 0.0
    py_c = 0.0
    pz_c = 0.0
    for k in range(n_pts):
        px_c += proxy_world[k, 0]
        py_c += proxy_world[k, 1]
        pz_c += proxy_world[k, 2]
    px_c /= n_pts
    py_c /= n_pts
    pz_c /= n_pts
    r_proxy = 0.0
    for k in range(n_pts):
        d2 = ((proxy_world[k, 0] - px_c) ** 2
              + (proxy_world[k, 1] - py_c) ** 2
              + (proxy_world[k, 2] - pz_c) ** 2)
        if d2 > r_proxy:
            r_proxy = d2
    r_reach = r_mesh + math.sqrt(r_proxy)
    for j in prange(n_pose):
        r00, r01, r02 = rot_ow[j, 0, 0], rot_ow[j, 0, 1], rot_ow[j, 0, 2]
        r10, r11, r12 = rot_ow[j, 1, 0], rot_ow[j, 1, 1], rot_ow[j, 1, 2]
        r20, r21, r22 = rot_ow[j, 2, 0], rot_ow[j, 2, 1], rot_ow[j, 2, 2]
        tx, ty, tz = trans_ow[j, 0], trans_ow[j, 1], trans_ow[j, 2]
        # world position of the mesh bounding-sphere center at this pose
        wx_c = r00 * cx + r01 * cy + r02 * cz + tx
        wy_c = r10 * cx + r11 * cy + r12 * cz + ty
        wz_c = r20 * cx + r21 * cy + r22 * cz + tz
        gap2 = ((wx_c - px_c) ** 2 + (wy_c - py_c) ** 2 + (wz_c - pz_c) ** 2)
        if gap2 > r_reach * r_reach:
            out[j] = 0.0
            continue
        best = 0.0
        for k in range(n_pts):
            wx = proxy_world[k, 0] - tx
            wy = proxy_world[k, 1] - ty
            wz = proxy_world[k, 2] - tz
            # R^T (x - t): world point into the object frame
            qx = r00 * wx + r10 * wy + r20 * wz
            qy = r01 * wx + r11 * wy + r21 * wz
            qz = r02 * wx + r12 * wy + r22 * wz
            if (qx < bb_min[0] or qx > bb_max[0] or
                    qy < bb_min[1] or qy > bb_max[1] or
                    qz < bb_min[2] or qz > bb_max[2]):
                continue
            d2, wind = _sd_point(qx, qy, qz, vertices, triangles)
            if wind > 0.5:
                d = math.sqrt(d2)
                if d > best:
                    best = d
        out[j] = best


# ---------------------------------------------------------------------------
# public API


def raycast(mesh: TriMesh, origin, direction, t_max: float = np.inf):
    """Nearest intersection along a unit-direction ray, or None.

    Hits with t <= 1e-9 are ignored.  Returns ``(t, face_id)``.
    """
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-6:
        raise ValueError("direction must have unit norm")
    t, face = raycast_batch(mesh, np.asarray(origin, dtype=float)[None, :],
                            direction[None, :], t_max=t_max)
    if face[0] < 0:
        return None
    return float(t[0]), int(face[0])


def raycast_batch(mesh: TriMesh, origins, dirs,
                  t_max: float = np.inf, t_min: float = _T_MIN):
    """Batched nearest-hit ray cast; misses get t = inf and face_id = -1."""
    bvh = _accel(mesh)
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    out_t = np.empty(len(origins))
    out_face = np.empty(len(origins), dtype=np.int64)
    kern = _raycast_kernel_par if len(origins) > 1024 else _raycast_kernel
    kern(origins, dirs, float(t_min), float(t_max),
         mesh.vertices, mesh.triangles,
         bvh.node_min, bvh.node_max, bvh.node_left, bvh.node_right,
         bvh.node_start, bvh.node_count, bvh.tri_order,
         out_t, out_face)
    return out_t, out_face


def signed_distance(mesh: TriMesh, point) -> float:
    """Signed distance: negative inside, positive outside.

    The magnitude is the exact distance to the closest surface point; the
    sign comes from the generalized winding number.  Raises for meshes
    that are not watertight.
    """
    return float(signed_distance_batch(mesh, np.asarray(point, dtype=float)[None, :])[0])


def signed_distance_batch(mesh: TriMesh, points) -> np.ndarray:
    if not mesh.is_watertight:
        raise MeshError("open mesh: signed distance undefined")
    points = np.ascontiguousarray(points, dtype=np.float64)
    out = np.empty(len(points))
    _signed_distance_kernel(points, mesh.vertices, mesh.triangles, out)
    return out


def point_face_distances(mesh: TriMesh, point) -> np.ndarray:
    """Distance from one point to every face (used by contact classifiers)."""
    point = np.asarray(point, dtype=float)
    out = np.empty(mesh.n_faces)
    _point_face_distance_kernel(point[0], point[1], point[2],
                                mesh.vertices, mesh.triangles, out)
    return out


def max_penetration_depths(mesh: TriMesh, rotations, translations,
                           proxy_points_world) -> np.ndarray:
    """Deepest penetration of any proxy point into the mesh, per pose.

    ``rotations``/``translations`` give object-to-world poses as (J, 3, 3)
    and (J, 3) arrays; proxy points are fixed in the world frame.
    """
    if not mesh.is_watertight:
        raise MeshError("open mesh: signed distance undefined")
    rotations = np.ascontiguousarray(rotations, dtype=np.float64)
    translations = np.ascontiguousarray(translations, dtype=np.float64)
    proxy = np.ascontiguousarray(proxy_points_world, dtype=np.float64)
    bb_min, bb_max = mesh.bounds
    out = np.empty(len(rotations))
    _max_penetration_kernel(rotations, translations, proxy,
                            mesh.vertices, mesh.triangles,
                            np.ascontiguousarray(bb_min),
                            np.ascontiguousarray(bb_max), out)
    return out
