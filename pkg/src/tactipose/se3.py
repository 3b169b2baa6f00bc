"""Rigid-body transforms and the twist parametrization used by the optimizer.

A pose is stored as an explicit rotation matrix plus translation vector.
The optimizer state is a 6-vector twist ``xi`` whose first three components
are the translation in meters and whose last three are an axis-angle
rotation vector in radians.  ``exp_map`` converts a twist to a pose by
passing the translation through unchanged and applying Rodrigues' formula
to the rotation block; this is deliberately *not* the full SE(3)
exponential (no V-matrix coupling), because the optimizer treats the two
blocks as independent coordinates.

Numerical thresholds below are stability choices for IEEE doubles, not
model parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import make_rng

# Below this rotation angle the first-order series replaces the closed form.
_TINY_ANGLE = 1e-12

# Orthonormality tolerance enforced on pose construction.
_POSE_ATOL = 1e-9


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric (hat) matrix of a 3-vector."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def rotvec_to_matrix(w: np.ndarray) -> np.ndarray:
    """Rodrigues exponential: axis-angle vector to rotation matrix.

    For angles below 1e-12 rad the first-order series I + [w]x is used to
    avoid dividing by a vanishing norm.
    """
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta < _TINY_ANGLE:
        return np.eye(3) + skew(w)
    k = skew(w / theta)
    return np.eye(3) + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)


def matrix_to_rotvec(r: np.ndarray) -> np.ndarray:
    """Rotation-matrix logarithm as an axis-angle vector with norm <= pi.

    Three branches: small angles read the skew part directly, angles near
    pi recover the axis from the symmetric part (the skew part vanishes
    there), everything else uses the standard trace formula.
    """
    r = np.asarray(r, dtype=float)
    trace = float(np.trace(r))
    theta = math.acos(min(1.0, max(-1.0, (trace - 1.0) / 2.0)))
    axis_raw = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    if theta < 1e-10:
        return 0.5 * axis_raw
    if theta > math.pi - 1e-6:
        # R ~ 2 n n^T - I at theta = pi; take the dominant column for n.
        m = 0.5 * (r + np.eye(3))
        i = int(np.argmax(np.diag(m)))
        axis = m[:, i] / math.sqrt(max(m[i, i], 1e-300))
        axis /= np.linalg.norm(axis)
        # Orient the axis to agree with the (tiny) skew part when present.
        if axis @ axis_raw < 0.0:
            axis = -axis
        return theta * axis
    return (theta / (2.0 * math.sin(theta))) * axis_raw


@dataclass(frozen=True)
class Pose:
    """Element of SE(3): ``rotation`` (3x3, det +1) and ``translation`` (m)."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r @ r.T, np.eye(3), atol=_POSE_ATOL):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _POSE_ATOL:
            raise ValueError("rotation must have determinant +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3))

    def compose(self, other: "Pose") -> "Pose":
        """self applied after other: (self * other) x = self(other(x))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def inverse(self) -> "Pose":
        rt = self.rotation.T.copy()
        return Pose(rt, -rt @ self.translation)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a 3-vector or an (N, 3) batch of points."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            return self.rotation @ points + self.translation
        return points @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @staticmethod
    def from_quaternion(q_wxyz: np.ndarray, translation=(0.0, 0.0, 0.0)) -> "Pose":
        """Pose from a scalar-first unit quaternion (w, x, y, z)."""
        return Pose(quaternion_to_matrix(q_wxyz), np.asarray(translation, dtype=float))

    def to_quaternion(self) -> np.ndarray:
        """Scalar-first quaternion (w, x, y, z) with non-negative w."""
        return matrix_to_quaternion(self.rotation)


def quaternion_to_matrix(q_wxyz: np.ndarray) -> np.ndarray:
    q = np.asarray(q_wxyz, dtype=float).reshape(4)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("quaternion norm is near zero")
    w, x, y, z = q / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quaternion(r: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns (w, x, y, z) with w >= 0."""
    r = np.asarray(r, dtype=float)
    tr = float(np.trace(r))
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s, 0.25 * s,
                      (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s,
                      0.25 * s, (r[1, 2] + r[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s, 0.25 * s])
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def exp_map(xi: np.ndarray) -> Pose:
    """Twist to pose: translation passed through, rotation exponentiated."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    return Pose(rotvec_to_matrix(xi[3:6]), xi[0:3].copy())


def twist_of(pose: Pose) -> np.ndarray:
    """Inverse of :func:`exp_map`; rotation block has norm <= pi."""
    return np.concatenate([pose.translation, matrix_to_rotvec(pose.rotation)])


def left_jacobian(w: np.ndarray) -> np.ndarray:
    """Left Jacobian of SO(3) at the axis-angle vector ``w``.

    Relates additive changes of the axis-angle coordinates to local
    rotations: exp((w + dw)^) ~ exp((J_l(w) dw)^) exp(w^).
    """
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    k = skew(w)
    if theta < 1e-6:
        return np.eye(3) + 0.5 * k + (k @ k) / 6.0
    t2 = theta * theta
    return (np.eye(3)
            + ((1.0 - math.cos(theta)) / t2) * k
            + ((theta - math.sin(theta)) / (t2 * theta)) * (k @ k))


def sample_rotation_uniform(seed) -> Pose:
    """Rotation drawn from the Haar measure on SO(3).

    Normalizes a 4-vector of independent standard Gaussians into a unit
    quaternion (w, x, y, z).  ``seed`` may be an integer or an existing
    Generator (the latter lets callers run derived streams).
    """
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    q = rng.standard_normal(4)
    return Pose(quaternion_to_matrix(q), np.zeros(3))


def quaternions_to_rotvecs(q_wxyz: np.ndarray) -> np.ndarray:
    """Batch conversion of (N, 4) scalar-first quaternions to axis-angle
    vectors of norm <= pi.  Rows need not be normalized."""
    q = np.asarray(q_wxyz, dtype=float)
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    q = np.where(q[:, :1] < 0.0, -q, q)  # keep the angle in [0, pi]
    v_norm = np.linalg.norm(q[:, 1:], axis=1)
    angle = 2.0 * np.arctan2(v_norm, q[:, 0])
    safe = np.where(v_norm > 1e-12, v_norm, 1.0)
    scale = np.where(v_norm > 1e-12, angle / safe, 2.0)
    return q[:, 1:] * scale[:, None]


def rewrap_rotvec(w: np.ndarray) -> np.ndarray:
    """Replace an axis-angle vector of norm >= pi + 0.1 by the equivalent
    one of norm < pi.  Vectors inside the band (pi - 0.1, pi + 0.1) are kept
    as-is so iterative updates do not chatter around the log-map cut."""
    w = np.asarray(w, dtype=float)
    theta = float(np.linalg.norm(w))
    if theta < math.pi + 0.1:
        return w
    reduced = math.fmod(theta, 2.0 * math.pi)
    if reduced > math.pi:
        reduced -= 2.0 * math.pi
    return w * (reduced / theta)
