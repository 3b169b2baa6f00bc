"""Planar tactile sensor model, contact-depth patches, and placement.

Sensor frame convention: the gel is the local x-y rectangle centered at the
origin and the outward gel normal is local +z; the sensor body (used as the
collision proxy) occupies the slab z in [-proxy_thickness, 0].

A patch stores normalized indentation per pixel: 0 = no contact, 1 = the
surface reaches the gel plane (full ``max_indent`` compression).  Rows index
v (gel height), columns index u (gel width), row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .mesh import SurfaceSample
from .se3 import Pose


@dataclass(frozen=True)
class SensorModel:
    """Geometry of a planar-gel tactile sensor (meters / pixel counts)."""

    gel_width: float = 0.019
    gel_height: float = 0.016
    pixels_u: int = 60
    pixels_v: int = 80
    max_indent: float = 0.0015
    proxy_thickness: float = 0.010

    def __post_init__(self):
        if min(self.gel_width, self.gel_height, self.max_indent,
               self.proxy_thickness) <= 0:
            raise ValueError("sensor dimensions must be positive")
        if self.pixels_u < 8 or self.pixels_v < 8:
            raise ValueError("pixel counts must be >= 8")

    def pixel_grid(self) -> np.ndarray:
        """(pixels_v * pixels_u, 3) local pixel-center positions on the gel."""
        u = (np.arange(self.pixels_u) + 0.5) / self.pixels_u - 0.5
        v = (np.arange(self.pixels_v) + 0.5) / self.pixels_v - 0.5
        uu, vv = np.meshgrid(u * self.gel_width, v * self.gel_height)
        return np.stack([uu.ravel(), vv.ravel(), np.zeros(uu.size)], axis=1)

    def proxy_grid(self, nu: int = 16, nv: int = 16, nd: int = 4) -> np.ndarray:
        """Sample points filling the sensor body behind the gel plane.

        Cell centers only, so the gel surface itself (z = 0) is excluded.
        """
        u = ((np.arange(nu) + 0.5) / nu - 0.5) * self.gel_width
        v = ((np.arange(nv) + 0.5) / nv - 0.5) * self.gel_height
        d = -(np.arange(nd) + 0.5) / nd * self.proxy_thickness
        uu, vv, dd = np.meshgrid(u, v, d, indexing="ij")
        return np.stack([uu.ravel(), vv.ravel(), dd.ravel()], axis=1)


DEFAULT_SENSOR = SensorModel()


@dataclass(frozen=True)
class TactilePatch:
    """Contact-depth image in [0, 1]; all-zero means no contact."""

    depth: np.ndarray
    sensor: SensorModel = field(default=DEFAULT_SENSOR)

    def __post_init__(self):
        d = np.asarray(self.depth, dtype=np.float64)
        if d.ndim != 2:
            raise ValueError("depth must be a 2-D array")
        if d.shape != (self.sensor.pixels_v, self.sensor.pixels_u):
            raise ValueError(
                f"depth shape {d.shape} does not match sensor "
                f"({self.sensor.pixels_v}, {self.sensor.pixels_u})")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("depth values must lie in [0, 1]")
        d = np.ascontiguousarray(d)
        d.flags.writeable = False
        object.__setattr__(self, "depth", d)

    @property
    def is_empty(self) -> bool:
        return bool(np.all(self.depth == 0.0))

    def contact_mask(self, threshold: float = 0.05) -> np.ndarray:
        return self.depth > threshold

    def contact_fraction(self, threshold: float = 0.05) -> float:
        return float(self.contact_mask(threshold).mean())

    def saturated_fraction(self, level: float = 0.4) -> float:
        """Fraction of all pixels at or above ``level`` of full compression."""
        return float((self.depth >= level).mean())


@dataclass(frozen=True)
class SensorPlacement:
    """Pose of the sensor frame in the object (or world) frame."""

    pose: Pose

    @property
    def gel_center(self) -> np.ndarray:
        return self.pose.translation

    @property
    def gel_normal(self) -> np.ndarray:
        """Direction the gel faces (local +z expressed in the parent frame)."""
        return self.pose.rotation[:, 2].copy()


def tangent_frame(normal: np.ndarray) -> np.ndarray:
    """Deterministic rotation whose +z column equals ``-normal``.

    In-plane orientation: local x = normalize(n x a) with a = (0,0,1),
    falling back to a = (1,0,0) when |n . (0,0,1)| > 0.99.  A pure function
    of the normal, so equal normals give identical frames.
    """
    n = np.asarray(normal, dtype=float)
    n = n / np.linalg.norm(n)
    a = np.array([0.0, 0.0, 1.0])
    if abs(n @ a) > 0.99:
        a = np.array([1.0, 0.0, 0.0])
    x = np.cross(n, a)
    x /= np.linalg.norm(x)
    z = -n
    y = np.cross(z, x)
    return np.stack([x, y, z], axis=1)


def placement_at_contact(position, normal, indent: float,
                         sensor: SensorModel) -> SensorPlacement:
    """Sensor placement touching a surface point along its normal.

    The gel faces the surface (local +z = -normal); the gel-plane center
    sits ``max_indent - indent`` above the contact point, so ``indent`` is
    how much of the available compression range is used.
    """
    if not 0.0 <= indent <= sensor.max_indent + 1e-12:
        raise ValueError("indent must lie in [0, max_indent]")
    normal = np.asarray(normal, dtype=float)
    rot = tangent_frame(normal)
    center = np.asarray(position, dtype=float) + normal * (sensor.max_indent - indent)
    return SensorPlacement(Pose(rot, center))


def place_sensor_at_sample(sample: SurfaceSample, indent: float,
                           sensor: SensorModel = DEFAULT_SENSOR) -> SensorPlacement:
    return placement_at_contact(sample.position, sample.normal, indent, sensor)


# ---------------------------------------------------------------------------
# TPAT patch files: 16-byte header (magic, version u16, pixels_u u16,
# pixels_v u16, 6 reserved bytes), then row-major little-endian float32.

_TPAT_MAGIC = b"TPAT"
_TPAT_VERSION = 1


def save_tpat(path, patch: TactilePatch) -> None:
    with open(path, "wb") as fh:
        fh.write(_TPAT_MAGIC)
        fh.write(struct.pack("<HHH6x", _TPAT_VERSION,
                             patch.sensor.pixels_u, patch.sensor.pixels_v))
        fh.write(patch.depth.astype("<f4").tobytes())


def load_tpat(path, sensor: SensorModel | None = None) -> TactilePatch:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) != 16 or head[:4] != _TPAT_MAGIC:
            raise ValueError(f"not a TPAT file: {path}")
        version, pu, pv = struct.unpack("<HHH6x", head[4:])
        if version != _TPAT_VERSION:
            raise ValueError(f"unsupported TPAT version {version}")
        data = np.frombuffer(fh.read(4 * pu * pv), dtype="<f4")
        if data.size != pu * pv:
            raise ValueError("truncated TPAT file")
    if sensor is None:
        sensor = SensorModel(pixels_u=pu, pixels_v=pv)
    elif (sensor.pixels_u, sensor.pixels_v) != (pu, pv):
        raise ValueError("TPAT dimensions do not match the sensor model")
    depth = data.astype(np.float64).reshape(pv, pu)
    return TactilePatch(depth=depth, sensor=sensor)
