"""Per-object latent databases: construction and the LDB1 file format.

A database holds one entry per surface sample: the sample's position and
normal in the object frame plus the latent feature of the tactile patch
rendered at full indentation there.  The file layout is fixed
little-endian so other implementations can read and write it:

    header:  magic "LDB1", version u16, reserved u16, D u32, M u32,
             encoder_id as 32 raw bytes (NUL padded), h_nc as D float32
    records: sample_id u32, position 3x float64, normal 3x float64,
             vector D x float32, contact_score float32
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .encoder import (
    AnalyticEncoder,
    EncoderMismatch,
    LatentFeature,
    cosine_distances,
)
from .mesh import TriMesh, sample_surface
from .render import render_patch
from .sensor import SensorModel, place_sensor_at_sample

_LDB_MAGIC = b"LDB1"
_LDB_VERSION = 1


@dataclass(frozen=True)
class LatentDatabase:
    sample_ids: np.ndarray      # (M,) uint32
    positions: np.ndarray       # (M, 3) float64, object frame
    normals: np.ndarray         # (M, 3) float64
    vectors: np.ndarray         # (M, D) float32
    contact_scores: np.ndarray  # (M,) float32
    encoder_id: str
    h_nc: np.ndarray            # (D,) float32

    def __post_init__(self):
        m = len(self.sample_ids)
        for name in ("positions", "normals", "vectors", "contact_scores"):
            if len(getattr(self, name)) != m:
                raise ValueError(f"{name} length does not match sample_ids")

    def __len__(self) -> int:
        return len(self.sample_ids)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def feature(self, index: int) -> LatentFeature:
        return LatentFeature(vector=self.vectors[index],
                             contact_score=float(self.contact_scores[index]),
                             encoder_id=self.encoder_id)


def build_database(mesh: TriMesh, m: int, sensor: SensorModel,
                   encoder=None, seed: int = 0) -> LatentDatabase:
    """Sample the surface, render a full-indent patch at each sample, encode.

    Deterministic for a fixed seed; full indentation maximizes the contact
    information stored per position.
    """
    encoder = encoder or AnalyticEncoder()
    samples = sample_surface(mesh, m, seed)
    vectors = np.empty((m, encoder.dim), dtype=np.float32)
    scores = np.empty(m, dtype=np.float32)
    positions = np.empty((m, 3))
    normals = np.empty((m, 3))
    for i, s in enumerate(samples):
        placement = place_sensor_at_sample(s, sensor.max_indent, sensor)
        patch = render_patch(mesh, placement, sensor)
        feat = encoder.encode(patch)
        vectors[i] = feat.vector
        scores[i] = feat.contact_score
        positions[i] = s.position
        normals[i] = s.normal
    return LatentDatabase(
        sample_ids=np.arange(m, dtype=np.uint32),
        positions=positions, normals=normals,
        vectors=vectors, contact_scores=scores,
        encoder_id=encoder.encoder_id,
        h_nc=np.asarray(encoder.h_nc, dtype=np.float32),
    )


def select_compatible(db: LatentDatabase, query: LatentFeature,
                      delta_h: float, baseline: bool = False,
                      cosine: bool = False) -> np.ndarray:
    """Sample ids whose contact score is within ``delta_h`` of the query's.

    ``baseline`` disables the tactile criterion and returns every entry
    (the pure point-set-registration mode).  ``cosine`` is an extension
    that compares full latent vectors by cosine distance instead of the
    scalar contact score; it is off by default.
    """
    if baseline:
        return db.sample_ids.copy()
    if query.encoder_id != db.encoder_id:
        raise EncoderMismatch(
            f"encoder mismatch: query {query.encoder_id!r} vs "
            f"database {db.encoder_id!r}")
    if cosine:
        diffs = cosine_distances(db, query)  # extension; Eq-style scalar is default
    else:
        diffs = np.abs(db.contact_scores.astype(np.float64)
                       - query.contact_score)
    omega = db.sample_ids[diffs < delta_h]
    if omega.size == 0:
        raise ValueError("no compatible contacts - increase delta_h")
    return omega





def save_ldb(path, db: LatentDatabase) -> None:
    m, d = db.vectors.shape
    with open(path, "wb") as fh:
        fh.write(_LDB_MAGIC)
        fh.write(struct.pack("<HHII", _LDB_VERSION, 0, d, m))
        fh.write(db.encoder_id.encode().ljust(32, b"\0")[:32])
        fh.write(np.ascontiguousarray(db.h_nc, dtype="<f4").tobytes())
        for i in range(m):
            fh.write(struct.pack("<I", int(db.sample_ids[i])))
            fh.write(np.ascontiguousarray(db.positions[i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(db.normals[i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(db.vectors[i], dtype="<f4").tobytes())
            fh.write(struct.pack("<f", float(db.contact_scores[i])))


def load_ldb(path) -> LatentDatabase:
    with open(path, "rb") as fh:
        if fh.read(4) != _LDB_MAGIC:
            raise ValueError(f"not an LDB1 file: {path}")
        version, _, d, m = struct.unpack("<HHII", fh.read(12))
        if version != _LDB_VERSION:
            raise ValueError(f"unsupported LDB1 version {version}")
        encoder_id = fh.read(32).rstrip(b"\0").decode()
        h_nc = np.frombuffer(fh.read(4 * d), dtype="<f4").astype(np.float32)
        sample_ids = np.empty(m, dtype=np.uint32)
        positions = np.empty((m, 3))
        normals = np.empty((m, 3))
        vectors = np.empty((m, d), dtype=np.float32)
        scores = np.empty(m, dtype=np.float32)
        rec = struct.Struct("<I")
        for i in range(m):
            sample_ids[i] = rec.unpack(fh.read(4))[0]
            positions[i] = np.frombuffer(fh.read(24), dtype="<f8")
            normals[i] = np.frombuffer(fh.read(24), dtype="<f8")
            vectors[i] = np.frombuffer(fh.read(4 * d), dtype="<f4")
            scores[i] = struct.unpack("<f", fh.read(4))[0]
    return LatentDatabase(sample_ids=sample_ids, positions=positions,
                          normals=normals, vectors=vectors,
                          contact_scores=scores, encoder_id=encoder_id,
                          h_nc=h_nc)
