"""Gradient-descent pose refinement over candidate tuples.

Each candidate tuple is refined by plain fixed-gain gradient descent on
the mean squared distance between the sensors' world positions and the
tuple's positions mapped through the pose.  State is the 6-vector twist
(translation; axis-angle); the rotation block is re-exponentiated from
scratch every step, and rewrapped to the equivalent axis-angle of norm
below pi whenever its norm leaves the band around pi (the log-map cut).

Every hypothesis is independent, so the batch kernel runs them in
parallel with one result slot each; outputs are bitwise independent of
the thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, prange

from .rng import make_rng
from .se3 import exp_map, left_jacobian, quaternions_to_rotvecs
from .selection import CandidateTuple

_GRAD_TOL = 1e-10


@dataclass(frozen=True)
class GdConfig:
    """Gradient-descent settings (defaults follow the evaluation setup)."""

    translation_gain: float = 1e-2
    rotation_gain: float = 1.0
    k_max: int = 700
    l_s: float = 0.2               # initialization radius, meters
    n_rot_seeds: int = 1           # rotations drawn per translation hypothesis
    divergence_cap: float = 1e6    # loss above this marks a hypothesis diverged

    def __post_init__(self):
        if self.translation_gain <= 0 or self.rotation_gain <= 0:
            raise ValueError("gains must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.n_rot_seeds < 1:
            raise ValueError("n_rot_seeds must be >= 1")

    @property
    def K(self) -> np.ndarray:
        """6x6 diagonal gain matrix."""
        return np.diag([self.translation_gain] * 3 + [self.rotation_gain] * 3)

    def gains_vector(self) -> np.ndarray:
        return np.array([self.translation_gain] * 3 + [self.rotation_gain] * 3)


@dataclass(frozen=True)
class PoseHypothesis:
    """One GD iterate: twist state, its tuple, current loss and step count."""

    xi: np.ndarray
    tuple_ref: CandidateTuple
    loss: float = math.inf
    k: int = 0
    hypothesis_index: int = 0
    diverged: bool = False


def loss_of(xi, tup: CandidateTuple, observations) -> float:
    """Mean squared sensor-position alignment error (m^2) at twist ``xi``."""
    pose = exp_map(xi)
    t_world = pose.apply(tup.positions)
    s = np.stack([o.s for o in observations])
    r = s - t_world
    return float(np.mean(np.sum(r * r, axis=1)))


def gradient(xi, tup: CandidateTuple, observations) -> np.ndarray:
    """Analytic gradient of :func:`loss_of` with respect to the twist.

    Translation block: -(2/L) sum r_i.  Rotation block uses the closed-form
    derivative of the Rodrigues map in its axis-angle coordinates (left
    Jacobian): d(R t)/dw = -[R t]_x J_l(w).
    """
    xi = np.asarray(xi, dtype=float)
    pose = exp_map(xi)
    t_world = pose.apply(tup.positions)
    s = np.stack([o.s for o in observations])
    r = s - t_world
    n = len(s)
    g_t = -(2.0 / n) * r.sum(axis=0)
    rotated = t_world - xi[:3]  # R t_i
    cross = np.cross(rotated, r).sum(axis=0)
    g_w = -(2.0 / n) * (left_jacobian(xi[3:]).T @ cross)
    return np.concatenate([g_t, g_w])


# translation hypothesis directions: center, face centers, cube vertices
_INIT_DIRECTIONS = np.array(
    [[0.0, 0.0, 0.0]]
    + [[s if a == 0 else 0.0, s if a == 1 else 0.0, s if a == 2 else 0.0]
       for a in range(3) for s in (1.0, -1.0)]
    + [[sx, sy, sz] for sx in (-1.0, 1.0) for sy in (-1.0, 1.0)
       for sz in (-1.0, 1.0)]
)
_INIT_DIRECTIONS[7:] /= np.sqrt(3.0)


def init_twists(sensor_centroid: np.ndarray, cfg: GdConfig, seed: int,
                tuple_index: int) -> np.ndarray:
    """(15 * n_rot_seeds, 6) initial twists for one tuple.

    Translations are the sensor centroid plus the cube directions at radius
    ``l_s``; each is paired with independent uniform rotations.  All draws
    for a tuple come from one counter stream keyed by (seed, tuple_index),
    with hypothesis h consuming the h-th quadruple of Gaussians, so results
    do not depend on evaluation order or worker count.
    """
    n_hyp = len(_INIT_DIRECTIONS) * cfg.n_rot_seeds
    draws = make_rng(seed, tuple_index).standard_normal((n_hyp, 4))
    rotvecs = quaternions_to_rotvecs(draws)
    translations = np.repeat(sensor_centroid[None, :] +
                             cfg.l_s * _INIT_DIRECTIONS, cfg.n_rot_seeds, axis=0)
    return np.concatenate([translations, rotvecs], axis=1)


def init_hypotheses(tup: CandidateTuple, observations, cfg: GdConfig,
                    seed: int, tuple_index: int = 0) -> list[PoseHypothesis]:
    """The 15 translation starts (sensor centroid plus cube directions at
    radius ``l_s``) paired with ``n_rot_seeds`` uniform rotations each."""
    s_c = np.stack([o.s for o in observations]).mean(axis=0)
    xi0 = init_twists(s_c, cfg, seed, tuple_index)
    return [PoseHypothesis(xi=xi0[h], tuple_ref=tup,
                           loss=loss_of(xi0[h], tup, observations),
                           hypothesis_index=h)
            for h in range(len(xi0))]


@njit(cache=True, parallel=True)
def _gd_kernel(xi0, t_obj, s, gains, k_max, div_cap,
               out_xi, out_loss, out_iters, out_status):
    n_hyp = xi0.shape[0]
    n_sen = s.shape[0]
    inv_l = 1.0 / n_sen
    g_t_gain = gains[0]
    g_w_gain = gains[3]
    for h in prange(n_hyp):
        px, py, pz = xi0[h, 0], xi0[h, 1], xi0[h, 2]
        wx, wy, wz = xi0[h, 3], xi0[h, 4], xi0[h, 5]
        status = 0
        k = 0
        while k < k_max:
            theta2 = wx * wx + wy * wy + wz * wz
            theta = math.sqrt(theta2)
            if theta < 1e-6:
                sa = 1.0 - theta2 / 6.0
                cb = 0.5 - theta2 / 24.0
                ja = 0.5 - theta2 / 24.0
                jb = 1.0 / 6.0 - theta2 / 120.0
            else:
                sa = math.sin(theta) / theta
                cb = (1.0 - math.cos(theta)) / theta2
                ja = cb
                jb = (theta - math.sin(theta)) / (theta2 * theta)

            gx = 0.0
            gy = 0.0
            gz = 0.0
            cx = 0.0
            cy = 0.0
            cz = 0.0
            loss = 0.0
            for i in range(n_sen):
                tx, ty, tz = t_obj[h, i, 0], t_obj[h, i, 1], t_obj[h, i, 2]
                # R t = t + sa (w x t) + cb (w x (w x t))
                ax = wy * tz - wz * ty
                ay = wz * tx - wx * tz
                az = wx * ty - wy * tx
                bx = wy * az - wz * ay
                by = wz * ax - wx * az
                bz = wx * ay - wy * ax
                rtx = tx + sa * ax + cb * bx
                rty = ty + sa * ay + cb * by
                rtz = tz + sa * az + cb * bz
                rx = s[i, 0] - rtx - px
                ry = s[i, 1] - rty - py
                rz = s[i, 2] - rtz - pz
                loss += rx * rx + ry * ry + rz * rz
                gx += rx
                gy += ry
                gz += rz
                # c += (R t) x r
                cx += rty * rz - rtz * ry
                cy += rtz * rx - rtx * rz
                cz += rtx * ry - rty * rx
            loss *= inv_l
            if not math.isfinite(loss) or loss > div_cap:
                status = 2
                break
            # gradient: translation block
            gtx = -2.0 * inv_l * gx
            gty = -2.0 * inv_l * gy
            gtz = -2.0 * inv_l * gz
            # rotation block: -(2/L) J_l^T c = -(2/L)(c - ja (w x c) + jb (w x (w x c)))
            ax = wy * cz - wz * cy
            ay = wz * cx - wx * cz
            az = wx * cy - wy * cx
            bx = wy * az - wz * ay
            by = wz * ax - wx * az
            bz = wx * ay - wy * ax
            gwx = -2.0 * inv_l * (cx - ja * ax + jb * bx)
            gwy = -2.0 * inv_l * (cy - ja * ay + jb * by)
            gwz = -2.0 * inv_l * (cz - ja * az + jb * bz)
            gn = math.sqrt(gtx * gtx + gty * gty + gtz * gtz
                           + gwx * gwx + gwy * gwy + gwz * gwz)
            if gn < 1e-10:
                status = 1
                break
            px -= g_t_gain * gtx
            py -= g_t_gain * gty
            pz -= g_t_gain * gtz
            wx -= g_w_gain * gwx
            wy -= g_w_gain * gwy
            wz -= g_w_gain * gwz
            theta = math.sqrt(wx * wx + wy * wy + wz * wz)
            if theta >= math.pi + 0.1:
                reduced = theta % (2.0 * math.pi)
                if reduced > math.pi:
                    reduced -= 2.0 * math.pi
                scale = reduced / theta
                wx *= scale
                wy *= scale
                wz *= scale
            k += 1

        # final loss at the final state
        theta2 = wx * wx + wy * wy + wz * wz
        theta = math.sqrt(theta2)
        if theta < 1e-6:
            sa = 1.0 - theta2 / 6.0
            cb = 0.5 - theta2 / 24.0
        else:
            sa = math.sin(theta) / theta
            cb = (1.0 - math.cos(theta)) / theta2
        loss = 0.0
        for i in range(n_sen):
            tx, ty, tz = t_obj[h, i, 0], t_obj[h, i, 1], t_obj[h, i, 2]
            ax = wy * tz - wz * ty
            ay = wz * tx - wx * tz
            az = wx * ty - wy * tx
            bx = wy * az - wz * ay
            by = wz * ax - wx * az
            bz = wx * ay - wy * ax
            rx = s[i, 0] - (tx + sa * ax + cb * bx) - px
            ry = s[i, 1] - (ty + sa * ay + cb * by) - py
            rz = s[i, 2] - (tz + sa * az + cb * bz) - pz
            loss += rx * rx + ry * ry + rz * rz
        loss *= inv_l
        if not math.isfinite(loss) or loss > div_cap:
            status = 2
        out_xi[h, 0] = px
        out_xi[h, 1] = py
        out_xi[h, 2] = pz
        out_xi[h, 3] = wx
        out_xi[h, 4] = wy
        out_xi[h, 5] = wz
        out_loss[h] = loss
        out_iters[h] = k
        out_status[h] = status


def optimize(hypotheses: list[PoseHypothesis], cfg: GdConfig,
             observations) -> list[PoseHypothesis]:
    """Run GD on every hypothesis; report the best one per tuple.

    Hypotheses whose loss overflows the divergence cap are dropped; a
    tuple whose hypotheses all diverge is omitted (never fatal).  Results
    are ordered by first appearance of each tuple in the input.
    """
    if not hypotheses:
        return []
    s = np.ascontiguousarray(np.stack([o.s for o in observations]))
    xi0 = np.ascontiguousarray(np.stack([h.xi for h in hypotheses]))
    t_obj = np.ascontiguousarray(
        np.stack([h.tuple_ref.positions for h in hypotheses]))
    n = len(hypotheses)
    out_xi = np.empty((n, 6))
    out_loss = np.empty(n)
    out_iters = np.empty(n, dtype=np.int64)
    out_status = np.empty(n, dtype=np.int64)
    _gd_kernel(xi0, t_obj, s, cfg.gains_vector(), cfg.k_max,
               cfg.divergence_cap, out_xi, out_loss, out_iters, out_status)

    best: dict[int, int] = {}
    order: list[int] = []
    for i, h in enumerate(hypotheses):
        if out_status[i] == 2:
            continue
        key = id(h.tuple_ref)
        if key not in best:
            best[key] = i
            order.append(key)
        elif out_loss[i] < out_loss[best[key]]:
            best[key] = i
    return [
        PoseHypothesis(xi=out_xi[i].copy(), tuple_ref=hypotheses[i].tuple_ref,
                       loss=float(out_loss[i]), k=int(out_iters[i]),
                       hypothesis_index=hypotheses[i].hypothesis_index)
        for i in (best[k] for k in order)
    ]


def optimize_tuples(tuples, observations, cfg: GdConfig,
                    seed: int) -> list[PoseHypothesis]:
    """Initialize and optimize all candidate tuples; best hypothesis each.

    Array-based fast path equivalent to running :func:`init_hypotheses`
    followed by :func:`optimize` tuple by tuple.
    """
    tuples = list(tuples)
    if not tuples:
        return []
    s = np.ascontiguousarray(np.stack([o.s for o in observations]))
    s_c = s.mean(axis=0)
    n_hyp = len(_INIT_DIRECTIONS) * cfg.n_rot_seeds
    n = len(tuples) * n_hyp

    xi0 = np.empty((n, 6))
    for j in range(len(tuples)):
        xi0[j * n_hyp:(j + 1) * n_hyp] = init_twists(s_c, cfg, seed, j)
    t_obj = np.repeat(np.stack([t.positions for t in tuples]), n_hyp, axis=0)

    out_xi = np.empty((n, 6))
    out_loss = np.empty(n)
    out_iters = np.empty(n, dtype=np.int64)
    out_status = np.empty(n, dtype=np.int64)
    _gd_kernel(np.ascontiguousarray(xi0), np.ascontiguousarray(t_obj), s,
               cfg.gains_vector(), cfg.k_max, cfg.divergence_cap,
               out_xi, out_loss, out_iters, out_status)

    results = []
    for j, tup in enumerate(tuples):
        lo = j * n_hyp
        block_loss = np.where(out_status[lo:lo + n_hyp] == 2, np.inf,
                              out_loss[lo:lo + n_hyp])
        h = int(np.argmin(block_loss))
        if not np.isfinite(block_loss[h]):
            continue  # every hypothesis of this tuple diverged
        i = lo + h
        results.append(PoseHypothesis(
            xi=out_xi[i].copy(), tuple_ref=tup, loss=float(out_loss[i]),
            k=int(out_iters[i]), hypothesis_index=h))
    return results
