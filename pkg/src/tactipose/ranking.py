"""Physical-plausibility ranking of optimized poses.

A pose's score is its final alignment loss plus the deepest interpenetration
between the object (at that pose) and any sensor's body, so poses that park
the object inside a sensor are demoted even when their alignment loss is
small.  Penetration is measured as the deepest of a fixed grid of sensor
proxy points inside the object: a lower bound on the true penetration that
converges with grid density, fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh
from .se3 import Pose, exp_map
from .sensor import SensorModel
from .spatial import max_penetration_depths


@dataclass(frozen=True)
class RankedPose:
    pose: Pose
    final_loss: float
    max_penetration: float
    score: float
    tuple_ref: object

    def __post_init__(self):
        if self.max_penetration < 0:
            raise ValueError("penetration depth cannot be negative")


def penetration_depth(object_mesh: TriMesh, object_pose: Pose,
                      sensor: SensorModel, sensor_pose: Pose,
                      grid=(16, 16, 4)) -> float:
    """Deepest penetration of the sensor body into the object, meters.

    The sensor body is the gel_width x gel_height x proxy_thickness box
    behind the gel plane, sampled at ``grid`` cell centers (the gel plane
    itself is excluded).  Zero when the shapes are disjoint.
    """
    proxy_world = sensor_pose.apply(sensor.proxy_grid(*grid))
    depths = max_penetration_depths(object_mesh,
                                    object_pose.rotation[None],
                                    object_pose.translation[None],
                                    proxy_world)
    return float(depths[0])


def rank(results, observations, object_mesh: TriMesh, sensor: SensorModel,
         penetration_weight: float = 1.0, grid=(16, 16, 4)):
    """Score and sort optimized poses; returns (ranked list, best index).

    ``results`` are the per-tuple best hypotheses from the optimizer.
    score = final_loss + penetration_weight * max over sensors of the
    penetration depth.  Sorting is ascending by score, then final loss,
    then tuple stream index, so the output is deterministic.
    """
    results = list(results)
    if not results:
        raise ValueError("no poses to rank")
    poses = [exp_map(r.xi) for r in results]
    rot = np.stack([p.rotation for p in poses])
    trans = np.stack([p.translation for p in poses])

    worst = np.zeros(len(results))
    for obs in observations:
        proxy_world = obs.pose.apply(sensor.proxy_grid(*grid))
        depths = max_penetration_depths(object_mesh, rot, trans, proxy_world)
        np.maximum(worst, depths, out=worst)

    scored = []
    for i, r in enumerate(results):
        score = r.loss + penetration_weight * float(worst[i])
        stream_index = getattr(r.tuple_ref, "stream_index", i)
        scored.append((score, r.loss, stream_index,
                       RankedPose(pose=poses[i], final_loss=r.loss,
                                  max_penetration=float(worst[i]),
                                  score=score, tuple_ref=r.tuple_ref)))
    scored.sort(key=lambda item: (item[0], item[1], item[2]))
    ranked = [item[3] for item in scored]
    return ranked, 0
