"""Synthetic tactile rendering: contact-depth patches from meshes and
superquadrics.

Pixel rays start one ``max_indent`` behind the gel plane and march along
the gel normal, so surfaces that poke through the gel plane still
register (clamped to full depth) instead of being lost to the ray-cast
self-intersection guard.  Normalized depth for a hit at parametric
distance t is clamp((2*max_indent - t) / max_indent, 0, 1), i.e. 1 when
the surface reaches the gel plane and 0 at the far end of the sensing
range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import TriMesh
from .rng import make_rng
from .sensor import (
    SensorModel,
    SensorPlacement,
    TactilePatch,
    placement_at_contact,
)
from .spatial import raycast_batch


def _pixel_rays(placement: SensorPlacement, sensor: SensorModel):
    rot = placement.pose.rotation
    local = sensor.pixel_grid()
    direction = rot[:, 2]
    origins = (local @ rot.T) + placement.pose.translation
    origins = origins - direction * sensor.max_indent
    return origins, direction


def _depth_from_t(t: np.ndarray, sensor: SensorModel) -> np.ndarray:
    depth = (2.0 * sensor.max_indent - t) / sensor.max_indent
    depth[~np.isfinite(t)] = 0.0
    depth = np.clip(depth, 0.0, 1.0)
    # snap float round-off at the rails (within 1e-9 of the sensing range)
    depth[depth < 1e-9] = 0.0
    depth[depth > 1.0 - 1e-9] = 1.0
    return depth


def render_patch(mesh: TriMesh, placement: SensorPlacement,
                 sensor: SensorModel) -> TactilePatch:
    """Contact-depth image of a mesh seen by the sensor at ``placement``.

    Deterministic; pixels whose ray misses within the sensing range are 0.
    """
    origins, direction = _pixel_rays(placement, sensor)
    dirs = np.broadcast_to(direction, origins.shape)
    t, _ = raycast_batch(mesh, origins, dirs, t_max=2.0 * sensor.max_indent)
    depth = _depth_from_t(t, sensor).reshape(sensor.pixels_v, sensor.pixels_u)
    return TactilePatch(depth=depth, sensor=sensor)


# ---------------------------------------------------------------------------
# superquadrics


@dataclass(frozen=True)
class Superquadric:
    """Implicit surface family: semi-axes a,b,c and shape exponents.

    eps1 -> 0 flattens the poles (prism-like), eps1 = eps2 = 1 is an
    ellipsoid.  Exponents are restricted to [0.1, 2.0] to keep the
    inside-outside function well conditioned.
    """

    a: float
    b: float
    c: float
    eps1: float
    eps2: float

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise ValueError("semi-axes must be positive")
        if not (0.1 <= self.eps1 <= 2.0 and 0.1 <= self.eps2 <= 2.0):
            raise ValueError("shape exponents must lie in [0.1, 2.0]")

    def inside_outside(self, points: np.ndarray) -> np.ndarray:
        """F(p); F < 1 inside, F = 1 on the surface, F > 1 outside."""
        p = np.asarray(points, dtype=float)
        x = np.abs(p[..., 0] / self.a)
        y = np.abs(p[..., 1] / self.b)
        z = np.abs(p[..., 2] / self.c)
        xy = (x ** (2.0 / self.eps2) + y ** (2.0 / self.eps2)) ** (self.eps2 / self.eps1)
        return xy + z ** (2.0 / self.eps1)

    def surface_point(self, eta: float, omega: float) -> np.ndarray:
        ce, se = np.cos(eta), np.sin(eta)
        co, so = np.cos(omega), np.sin(omega)
        return np.array([
            self.a * _spow(ce, self.eps1) * _spow(co, self.eps2),
            self.b * _spow(ce, self.eps1) * _spow(so, self.eps2),
            self.c * _spow(se, self.eps1),
        ])

    def surface_normal(self, eta: float, omega: float) -> np.ndarray:
        ce, se = np.cos(eta), np.sin(eta)
        co, so = np.cos(omega), np.sin(omega)
        n = np.array([
            _spow(ce, 2.0 - self.eps1) * _spow(co, 2.0 - self.eps2) / self.a,
            _spow(ce, 2.0 - self.eps1) * _spow(so, 2.0 - self.eps2) / self.b,
            _spow(se, 2.0 - self.eps1) / self.c,
        ])
        norm = np.linalg.norm(n)
        if norm < 1e-300:
            return np.array([0.0, 0.0, 1.0 if se >= 0 else -1.0])
        return n / norm


def _spow(u: float, p: float) -> float:
    """Signed power: sign(u) * |u|**p."""
    return np.sign(u) * np.abs(u) ** p


_MARCH_STEPS = 64
_BISECT_ITERS = 64
_BISECT_TOL = 1e-7  # meters


def render_superquadric_patch(sq: Superquadric, placement: SensorPlacement,
                              sensor: SensorModel) -> TactilePatch:
    """Same contract as :func:`render_patch` with an implicit surface.

    Each pixel ray is marched across the sensing window to bracket the
    first outside-to-inside crossing of the inside-outside function, then
    bisected (64 iterations max, 1e-7 m tolerance).
    """
    origins, direction = _pixel_rays(placement, sensor)
    t_max = 2.0 * sensor.max_indent
    ts = np.linspace(0.0, t_max, _MARCH_STEPS + 1)
    pts = origins[:, None, :] + ts[None, :, None] * direction[None, None, :]
    inside = sq.inside_outside(pts) <= 1.0

    n_px = origins.shape[0]
    t_hit = np.full(n_px, np.inf)

    # origin already inside: surface is behind the window start, full depth
    t_hit[inside[:, 0]] = 0.0

    first = np.argmax(inside, axis=1)
    cross = (~inside[:, 0]) & inside[np.arange(n_px), first]
    idx = np.flatnonzero(cross)
    if idx.size:
        lo = ts[first[idx] - 1]
        hi = ts[first[idx]]
        o = origins[idx]
        for _ in range(_BISECT_ITERS):
            if np.all(hi - lo < _BISECT_TOL):
                break
            mid = 0.5 * (lo + hi)
            mid_inside = sq.inside_outside(o + mid[:, None] * direction) <= 1.0
            hi = np.where(mid_inside, mid, hi)
            lo = np.where(mid_inside, lo, mid)
        t_hit[idx] = 0.5 * (lo + hi)

    depth = _depth_from_t(t_hit, sensor).reshape(sensor.pixels_v, sensor.pixels_u)
    return TactilePatch(depth=depth, sensor=sensor)


# ---------------------------------------------------------------------------
# training-set generation

DEFAULT_PARAM_RANGES = {
    "semi_axis": (0.012, 0.10),   # meters, log-uniform
    "exponent": (0.1, 1.0),       # log-uniform; spheres to sharp prisms
}

# contact-location mixture: face centers / sharp features / uniform params
_FACE_FRACTION = 0.50
_SHARP_FRACTION = 0.25

# the six (eta, omega) face-center directions of a superquadric
_FACE_DIRECTIONS = [
    (0.0, 0.0), (0.0, np.pi / 2), (0.0, np.pi), (0.0, -np.pi / 2),
    (np.pi / 2, 0.0), (-np.pi / 2, 0.0),
]


def generate_training_set(count: int, seed: int, sensor: SensorModel,
                          param_ranges: dict | None = None,
                          no_contact_fraction: float = 0.05) -> list[TactilePatch]:
    """Superquadric contact patches for encoder training.

    Shape parameters are log-uniform within ``param_ranges``; the contact
    point mixes face centers, sharp features (edges/corners), and uniform
    parameter draws so both saturated and sparse patches are well
    represented.  Indentation is uniform in [0.3, 1.0] * max_indent.  The
    final ``round(count * no_contact_fraction)`` patches are all-zero.
    Each patch draws from its own seed sub-stream, so sets are bitwise
    reproducible.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    ranges = dict(DEFAULT_PARAM_RANGES)
    if param_ranges:
        ranges.update(param_ranges)
    n_nc = int(round(count * no_contact_fraction))
    zero = TactilePatch(np.zeros((sensor.pixels_v, sensor.pixels_u)), sensor)
    patches = []
    for i in range(count - n_nc):
        patches.append(_training_patch(make_rng(seed, i), sensor, ranges))
    patches.extend([zero] * n_nc)
    return patches


def _log_uniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def _training_patch(rng, sensor, ranges) -> TactilePatch:
    ax_lo, ax_hi = ranges["semi_axis"]
    ep_lo, ep_hi = ranges["exponent"]
    sq = Superquadric(
        a=_log_uniform(rng, ax_lo, ax_hi),
        b=_log_uniform(rng, ax_lo, ax_hi),
        c=_log_uniform(rng, ax_lo, ax_hi),
        eps1=_log_uniform(rng, ep_lo, ep_hi),
        eps2=_log_uniform(rng, ep_lo, ep_hi),
    )
    branch = rng.random()
    if branch < _FACE_FRACTION:
        eta0, omega0 = _FACE_DIRECTIONS[rng.integers(len(_FACE_DIRECTIONS))]
        eta = eta0 + rng.uniform(-0.1, 0.1)
        omega = omega0 + rng.uniform(-0.1, 0.1)
    elif branch < _FACE_FRACTION + _SHARP_FRACTION:
        # near the omega transitions where small exponents form edges/corners
        k = rng.integers(4)
        omega = np.pi / 4 + k * np.pi / 2 + rng.uniform(-0.1, 0.1)
        eta = rng.uniform(-np.pi / 2 + 0.05, np.pi / 2 - 0.05)
    else:
        eta = rng.uniform(-np.pi / 2, np.pi / 2)
        omega = rng.uniform(-np.pi, np.pi)
    position = sq.surface_point(eta, omega)
    normal = sq.surface_normal(eta, omega)
    indent = rng.uniform(0.3, 1.0) * sensor.max_indent
    placement = placement_at_contact(position, normal, indent, sensor)
    return render_superquadric_patch(sq, placement, sensor)
