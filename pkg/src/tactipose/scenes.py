"""Synthetic evaluation scenes: object at a known pose, sensors touching it.

Each sensor placement is synthesized for a requested contact class and is
accepted only when the scene is self-consistent: the rendered patch is
non-empty, classifies to the requested class, and the sensor body does not
interpenetrate the object (a physically impossible placement, e.g. a gel
overhanging a concave notch).  Scene randomness is drawn from streams
disjoint from database construction, so scene contacts never coincide with
database samples by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .contacts import (
    CONTACT_CLASSES,
    CORNER,
    CURVED,
    DEFAULT_CLASSIFIER,
    EDGE,
    FLAT,
    ContactClassifierConfig,
    classify_patch,
    classify_surface_point,
    convex_sharp_edges,
    corner_vertices,
)
from .mesh import TriMesh, sample_surface
from .ranking import penetration_depth
from .render import render_patch
from .rng import make_rng
from .se3 import Pose, sample_rotation_uniform
from .selection import SensorObservation
from .sensor import SensorModel, SensorPlacement, placement_at_contact

_MAX_ATTEMPTS = 300
_PENETRATION_TOL = 1e-9  # valid placements must not enter the sensor body


@dataclass(frozen=True)
class Scene:
    mesh_id: str
    mesh: TriMesh
    gt_pose: Pose
    observations: list[SensorObservation]
    labels: list[str]
    placements: list[SensorPlacement]  # object frame
    seed: int

    @property
    def n_sensors(self) -> int:
        return len(self.observations)


def available_contact_classes(mesh: TriMesh,
                              cfg: ContactClassifierConfig = DEFAULT_CLASSIFIER,
                              probe: int = 80) -> tuple[str, ...]:
    """Contact classes that exist somewhere on this mesh."""
    cached = mesh.__dict__.get("_contact_classes")
    if cached is not None:
        return cached
    found = set()
    for s in sample_surface(mesh, probe, seed=987654321):
        found.add(classify_surface_point(mesh, s.position, cfg))
        if FLAT in found and CURVED in found:
            break
    if len(convex_sharp_edges(mesh, cfg)[2]) > 0:
        found.add(EDGE)
    else:
        found.discard(EDGE)
    if len(corner_vertices(mesh, cfg)[0]) > 0:
        found.add(CORNER)
    else:
        found.discard(CORNER)
    classes = tuple(c for c in CONTACT_CLASSES if c in found)
    object.__setattr__(mesh, "_contact_classes", classes)
    return classes


def _placement_for_class(mesh, contact_class, rng, sensor, cfg):
    """One candidate placement of the requested class, or None."""
    if contact_class in (FLAT, CURVED):
        sample = sample_surface(mesh, 1, seed=int(rng.integers(2**62)))[0]
        if classify_surface_point(mesh, sample.position, cfg) != contact_class:
            return None
        return placement_at_contact(sample.position, sample.normal,
                                    sensor.max_indent, sensor)
    if contact_class == EDGE:
        ends, bisectors, lengths = convex_sharp_edges(mesh, cfg)
        if len(lengths) == 0:
            return None
        weights = lengths / lengths.sum()
        e = int(rng.choice(len(lengths), p=weights))
        t = rng.uniform(0.15, 0.85)  # stay clear of the endpoints
        point = (1 - t) * ends[e, 0] + t * ends[e, 1]
        return placement_at_contact(point, bisectors[e], sensor.max_indent, sensor)
    if contact_class == CORNER:
        positions, normals = corner_vertices(mesh, cfg)
        if len(positions) == 0:
            return None
        c = int(rng.integers(len(positions)))
        return placement_at_contact(positions[c], normals[c],
                                    sensor.max_indent, sensor)
    raise ValueError(f"unknown contact class {contact_class!r}")


def _valid_contact(mesh, placement, patch, contact_class, sensor, cfg):
    if patch.is_empty:
        return False
    if classify_patch(patch, cfg) != contact_class:
        return False
    depth = penetration_depth(mesh, Pose.identity(), sensor, placement.pose)
    return depth <= _PENETRATION_TOL


def make_scene(mesh: TriMesh, n_sensors: int, contact_spec, seed: int,
               sensor: SensorModel, mesh_id: str = "object",
               scene_uid: int = 1,
               cfg: ContactClassifierConfig = DEFAULT_CLASSIFIER) -> Scene:
    """Ground-truth scene with ``n_sensors`` sensors touching the object.

    ``contact_spec`` lists one contact class per sensor; None draws classes
    from whatever the mesh offers.  Deterministic in (seed, scene_uid).
    Raises naming the class when a requested class cannot be realized.
    """
    if n_sensors < 1:
        raise ValueError("need at least one sensor")
    if contact_spec is not None and len(contact_spec) != n_sensors:
        raise ValueError("contact_spec length must equal the sensor count")

    rng_pose = make_rng(seed, scene_uid, 0, 0)
    rotation = sample_rotation_uniform(rng_pose).rotation
    translation = rng_pose.uniform(-0.15, 0.15, 3)
    gt_pose = Pose(rotation, translation)

    if contact_spec is None:
        classes = available_contact_classes(mesh, cfg)
        rng_cls = make_rng(seed, scene_uid, 1, 0)
        contact_spec = [classes[int(rng_cls.integers(len(classes)))]
                        for _ in range(n_sensors)]

    placements, observations, labels = [], [], []
    for i, contact_class in enumerate(contact_spec):
        if contact_class not in CONTACT_CLASSES:
            raise ValueError(f"unknown contact class {contact_class!r}")
        rng_i = make_rng(seed, scene_uid, 2, i)
        placement = None
        patch = None
        for _ in range(_MAX_ATTEMPTS):
            candidate = _placement_for_class(mesh, contact_class, rng_i,
                                             sensor, cfg)
            if candidate is None:
                continue
            rendered = render_patch(mesh, candidate, sensor)
            if _valid_contact(mesh, candidate, rendered, contact_class,
                              sensor, cfg):
                placement, patch = candidate, rendered
                break
        if placement is None:
            raise ValueError(
                f"no '{contact_class}' contact realizable on mesh "
                f"{mesh_id!r} (sensor {i})")
        world_pose = gt_pose.compose(placement.pose)
        observations.append(SensorObservation(pose=world_pose, patch=patch))
        placements.append(placement)
        labels.append(contact_class)

    return Scene(mesh_id=mesh_id, mesh=mesh, gt_pose=gt_pose,
                 observations=observations, labels=labels,
                 placements=placements, seed=seed)
