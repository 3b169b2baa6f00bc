"""Contact-class taxonomy: flat / edge / corner / curved.

Two classifiers must agree for a scene to be well-posed: one looks at the
mesh around a surface point (normal clustering in a 5 mm ball), the other
at a rendered patch (footprint shape and tilt-compensated saturation).
Thresholds live in :class:`ContactClassifierConfig` and are exposed in
experiment configs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh
from .sensor import SensorModel, TactilePatch
from .spatial import point_face_distances

FLAT, EDGE, CORNER, CURVED = "flat", "edge", "corner", "curved"
CONTACT_CLASSES = (FLAT, EDGE, CORNER, CURVED)


@dataclass(frozen=True)
class ContactClassifierConfig:
    neighborhood: float = 0.005      # meters; ball radius for mesh normals
    flat_max_spread_deg: float = 5.0
    cluster_tol_deg: float = 20.0    # greedy normal clustering tolerance
    sharp_edge_deg: float = 30.0     # min dihedral for a placeable edge
    footprint_threshold: float = 0.05
    flat_saturated_fraction: float = 0.8
    flat_min_footprint: float = 0.3  # a flush flat contact covers the gel
    saturation_band: float = 0.2     # of max_indent, after tilt compensation
    edge_min_elongation: float = 4.0
    corner_max_area: float = 0.2


DEFAULT_CLASSIFIER = ContactClassifierConfig()


def _cluster_normals(normals: np.ndarray, tol_deg: float) -> list[np.ndarray]:
    """Greedy clustering by angle to each cluster's first member."""
    cos_tol = np.cos(np.radians(tol_deg))
    reps: list[np.ndarray] = []
    members: list[list[np.ndarray]] = []
    for n in normals:
        for i, rep in enumerate(reps):
            if n @ rep >= cos_tol:
                members[i].append(n)
                break
        else:
            reps.append(n)
            members.append([n])
    return [np.stack(m) for m in members]


def classify_surface_point(mesh: TriMesh, point,
                           cfg: ContactClassifierConfig = DEFAULT_CLASSIFIER) -> str:
    """Contact class of the local geometry around a surface point."""
    dists = point_face_distances(mesh, point)
    near = dists <= cfg.neighborhood
    normals = mesh.face_normals[near]
    if len(normals) == 0:
        raise ValueError("point is not near the mesh surface")
    clusters = _cluster_normals(normals, cfg.cluster_tol_deg)
    if len(clusters) >= 3:
        return CORNER
    if len(clusters) == 2:
        return EDGE
    spread = _max_pairwise_angle_deg(clusters[0])
    return FLAT if spread < cfg.flat_max_spread_deg else CURVED


def _max_pairwise_angle_deg(normals: np.ndarray) -> float:
    if len(normals) < 2:
        return 0.0
    dots = np.clip(normals @ normals.T, -1.0, 1.0)
    return float(np.degrees(np.arccos(dots.min())))


def classify_patch(patch: TactilePatch,
                   cfg: ContactClassifierConfig = DEFAULT_CLASSIFIER) -> str | None:
    """Contact class of a rendered patch; None when there is no contact.

    Flat is judged on tilt-compensated saturation (the best-fit plane over
    the footprint is removed first, so a slightly tilted flat face still
    reads as flat); edges by footprint elongation; corners by compact
    footprint area.
    """
    depth = patch.depth
    sensor = patch.sensor
    mask = depth > cfg.footprint_threshold
    if not mask.any():
        return None

    nv, nu = depth.shape
    u = ((np.arange(nu) + 0.5) / nu - 0.5) * sensor.gel_width
    v = ((np.arange(nv) + 0.5) / nv - 0.5) * sensor.gel_height
    uu, vv = np.meshgrid(u, v)
    um, vm, dm = uu[mask], vv[mask], depth[mask]

    # tilt compensation: remove the least-squares plane over the footprint
    a = np.stack([np.ones_like(um), um, vm], axis=1)
    coef, *_ = np.linalg.lstsq(a, dm, rcond=None)
    tilt = coef[1] * uu + coef[2] * vv
    comp = depth - tilt
    top = comp[mask].max()
    # saturation is judged over the footprint, so a flat face that covers
    # only part of the gel still reads as flat; grazing contacts (tiny
    # footprints) never do
    saturated_fraction = float((comp[mask] >= top - cfg.saturation_band).mean())
    if (saturated_fraction >= cfg.flat_saturated_fraction
            and mask.mean() >= cfg.flat_min_footprint):
        return FLAT

    du, dv = um - um.mean(), vm - vm.mean()
    var_u, var_v, cov = (du * du).mean(), (dv * dv).mean(), (du * dv).mean()
    tr = var_u + var_v
    disc = max(0.0, tr * tr / 4.0 - (var_u * var_v - cov * cov))
    lam1 = tr / 2.0 + np.sqrt(disc)
    lam2 = max(tr / 2.0 - np.sqrt(disc), 1e-18)
    if np.sqrt(lam1 / lam2) >= cfg.edge_min_elongation:
        return EDGE
    if mask.mean() < cfg.corner_max_area:
        return CORNER
    return CURVED


# ---------------------------------------------------------------------------
# mesh features for edge / corner sensor placements


def _edge_face_map(mesh: TriMesh) -> dict:
    owner = {}
    for f, (a, b, c) in enumerate(mesh.triangles):
        owner[(int(a), int(b))] = f
        owner[(int(b), int(c))] = f
        owner[(int(c), int(a))] = f
    return owner


def convex_sharp_edges(mesh: TriMesh,
                       cfg: ContactClassifierConfig = DEFAULT_CLASSIFIER):
    """Convex edges with dihedral angle at least ``sharp_edge_deg``.

    Returns (endpoints (E, 2, 3), bisector normals (E, 3), lengths (E,)).
    """
    owner = _edge_face_map(mesh)
    cos_max = np.cos(np.radians(cfg.sharp_edge_deg))
    seen = set()
    points, normals, lengths = [], [], []
    for (a, b), f1 in owner.items():
        if (b, a) not in owner or (b, a) in seen:
            continue
        seen.add((a, b))
        f2 = owner[(b, a)]
        n1, n2 = mesh.face_normals[f1], mesh.face_normals[f2]
        if n1 @ n2 > cos_max:
            continue
        # convex test: the far vertex of f2 lies below f1's plane
        tri2 = [int(x) for x in mesh.triangles[f2]]
        far = next(x for x in tri2 if x not in (a, b))
        if n1 @ (mesh.vertices[far] - mesh.vertices[a]) >= -1e-12:
            continue
        bis = n1 + n2
        norm = np.linalg.norm(bis)
        if norm < 1e-12:
            continue
        points.append([mesh.vertices[a], mesh.vertices[b]])
        normals.append(bis / norm)
        lengths.append(np.linalg.norm(mesh.vertices[b] - mesh.vertices[a]))
    if not points:
        return (np.zeros((0, 2, 3)), np.zeros((0, 3)), np.zeros(0))
    return np.asarray(points), np.asarray(normals), np.asarray(lengths)


def corner_vertices(mesh: TriMesh,
                    cfg: ContactClassifierConfig = DEFAULT_CLASSIFIER):
    """Vertices whose incident face normals form >= 3 clusters.

    Returns (positions (C, 3), outward mean normals (C, 3)).
    """
    incident: dict[int, list[int]] = {}
    for f, tri in enumerate(mesh.triangles):
        for x in tri:
            incident.setdefault(int(x), []).append(f)
    positions, normals = [], []
    for vid, faces in incident.items():
        clusters = _cluster_normals(mesh.face_normals[faces], cfg.cluster_tol_deg)
        if len(clusters) < 3:
            continue
        mean = mesh.face_normals[faces].sum(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            continue
        positions.append(mesh.vertices[vid])
        normals.append(mean / norm)
    if not positions:
        return np.zeros((0, 3)), np.zeros((0, 3))
    return np.asarray(positions), np.asarray(normals)
