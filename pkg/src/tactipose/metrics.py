"""Evaluation metrics: positional error, ADI-AUC, and contact accuracy."""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .contacts import DEFAULT_CLASSIFIER, ContactClassifierConfig, classify_patch
from .mesh import TriMesh, farthest_point_subsample
from .render import _pixel_rays
from .scenes import Scene
from .se3 import Pose
from .sensor import SensorModel, SensorPlacement, TactilePatch
from .spatial import raycast_batch

ADI_THRESHOLD = 0.02  # meters
_ADI_STEPS = 100
_CONTACT_SLACK = 0.002  # extra sensing range when checking contact existence


def positional_error(estimate: Pose, gt: Pose) -> float:
    """Euclidean translation error in centimeters."""
    return float(np.linalg.norm(estimate.translation - gt.translation)) * 100.0


def model_points(mesh: TriMesh, n: int = 512) -> np.ndarray:
    """Farthest-point subset of the mesh vertices used for ADI."""
    if len(mesh.vertices) <= n:
        return mesh.vertices.copy()
    return farthest_point_subsample(mesh.vertices, n)


def adi_distance(estimate: Pose, gt: Pose, points: np.ndarray,
                 rotation_only: bool = False) -> float:
    """Mean distance from each ground-truth-posed model point to the nearest
    estimate-posed model point (symmetry-tolerant pose error, meters)."""
    if rotation_only:
        estimate = Pose(estimate.rotation, gt.translation)
    gt_pts = gt.apply(points)
    est_pts = estimate.apply(points)
    nearest, _ = cKDTree(est_pts).query(gt_pts, k=1)
    return float(np.mean(nearest))


def adi_auc(estimate: Pose, gt: Pose, points: np.ndarray,
            threshold: float = ADI_THRESHOLD,
            rotation_only: bool = False) -> float:
    """Area under the ADI accuracy-vs-threshold curve, in percent.

    Thresholds sweep 0..``threshold`` in 100 trapezoidal steps; accuracy at
    a threshold is 1 when the ADI distance is within it.
    """
    if len(points) < 1:
        raise ValueError("need at least one model point")
    adi = adi_distance(estimate, gt, points, rotation_only=rotation_only)
    if adi < 1e-12:  # numerical dust would miss the tau = 0 node
        adi = 0.0
    taus = np.linspace(0.0, threshold, _ADI_STEPS + 1)
    acc = (adi <= taus).astype(float)
    area = np.trapezoid(acc, taus)
    return float(100.0 * area / threshold)


def contact_probe(mesh: TriMesh, placement_pose: Pose, sensor: SensorModel):
    """Re-render a contact check at a hypothesized relative placement.

    Returns (contact_exists, classification_patch).  Contact exists when
    any pixel ray hits within the sensing range widened by 2 mm; the
    classification patch is renormalized to the first contact (as if the
    sensor were pressed to full indentation there), so the contact class
    reflects local shape rather than the residual gap.
    """
    placement = SensorPlacement(placement_pose)
    origins, direction = _pixel_rays(placement, sensor)
    dirs = np.broadcast_to(direction, origins.shape)
    t_max = 2.0 * sensor.max_indent + _CONTACT_SLACK
    t, _ = raycast_batch(mesh, origins, dirs, t_max=t_max)
    hit = np.isfinite(t)
    if not hit.any():
        return False, None
    t0 = float(t[hit].min())
    depth = (t0 + sensor.max_indent - t) / sensor.max_indent
    depth[~hit] = 0.0
    depth = np.clip(depth, 0.0, 1.0)
    depth[depth < 1e-9] = 0.0
    depth[depth > 1.0 - 1e-9] = 1.0
    patch = TactilePatch(depth.reshape(sensor.pixels_v, sensor.pixels_u), sensor)
    return True, patch


def contact_accuracy(scene: Scene, estimate: Pose, sensor: SensorModel,
                     cfg: ContactClassifierConfig = DEFAULT_CLASSIFIER) -> bool:
    """True when the estimated pose touches every sensor with the labeled
    contact class.

    Each sensor's patch is re-rendered against the object at the estimated
    pose; the scene passes when every sensor both makes contact (within the
    sensing range widened by 2 mm) and reproduces its ground-truth contact
    class.
    """
    est_inv = estimate.inverse()
    for obs, label in zip(scene.observations, scene.labels):
        relative = est_inv.compose(obs.pose)  # sensor in estimated-object frame
        exists, patch = contact_probe(scene.mesh, relative, sensor)
        if not exists:
            return False
        if classify_patch(patch, cfg) != label:
            return False
    return True
