"""Readers/writers for the interchange formats shared with the estimator.

These codecs are written against the published byte layouts (TPAT patch
files, ENCW weight bundles, LDB1 latent databases), not against the
estimator's code, so either side can be swapped out independently.  All
values little-endian.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

TPAT_MAGIC = b"TPAT"
ENCW_MAGIC = b"ENCW"
LDB_MAGIC = b"LDB1"


def load_tpat(path) -> np.ndarray:
    """Depth image (pixels_v, pixels_u) float32 in [0, 1]."""
    raw = Path(path).read_bytes()
    if raw[:4] != TPAT_MAGIC:
        raise ValueError(f"not a TPAT file: {path}")
    version, pu, pv = struct.unpack("<HHH6x", raw[4:16])
    if version != 1:
        raise ValueError(f"unsupported TPAT version {version}")
    data = np.frombuffer(raw[16:16 + 4 * pu * pv], dtype="<f4")
    if data.size != pu * pv:
        raise ValueError("truncated TPAT file")
    return data.reshape(pv, pu).astype(np.float32)


def load_patch_dir(directory) -> np.ndarray:
    """All patches of a gen-patches output directory, name-sorted, stacked."""
    files = sorted(Path(directory).glob("*.tpat"))
    if not files:
        raise ValueError(f"no TPAT files in {directory}")
    patches = [load_tpat(f) for f in files]
    shape = patches[0].shape
    for f, p in zip(files, patches):
        if p.shape != shape:
            raise ValueError(f"patch size mismatch in {f}")
    return np.stack(patches)


def load_sample_positions(directory):
    """(sample_ids, positions, normals) from the samples.json sidecar."""
    meta = json.loads((Path(directory) / "samples.json").read_text())
    recs = meta["samples"]
    ids = np.array([r["sample_id"] for r in recs], dtype=np.uint32)
    pos = np.array([r["position"] for r in recs], dtype=np.float64)
    nor = np.array([r["normal"] for r in recs], dtype=np.float64)
    return ids, pos, nor


def weights_content_id(tensors: dict) -> str:
    """sha256 over the name-sorted canonical float32 tensor stream."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        h.update(name.encode())
        h.update(np.ascontiguousarray(tensors[name], dtype="<f4").tobytes())
    return h.hexdigest()[:32]


def save_encw(path, tensors: dict) -> str:
    encoder_id = weights_content_id(tensors)
    with open(path, "wb") as fh:
        fh.write(ENCW_MAGIC)
        fh.write(struct.pack("<HH", 1, len(tensors)))
        fh.write(encoder_id.encode().ljust(32, b"\0"))
        for name in sorted(tensors):
            data = np.ascontiguousarray(tensors[name], dtype="<f4")
            enc = name.encode()
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<H", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(data.tobytes())
    return encoder_id


def load_encw(path) -> tuple[dict, str]:
    with open(path, "rb") as fh:
        if fh.read(4) != ENCW_MAGIC:
            raise ValueError(f"not an ENCW file: {path}")
        version, n_tensors = struct.unpack("<HH", fh.read(4))
        if version != 1:
            raise ValueError(f"unsupported ENCW version {version}")
        encoder_id = fh.read(32).rstrip(b"\0").decode()
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<H", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            tensors[name] = np.frombuffer(fh.read(4 * count),
                                          dtype="<f4").reshape(shape).copy()
    return tensors, encoder_id


def save_ldb(path, sample_ids, positions, normals, vectors, scores,
             encoder_id: str, h_nc: np.ndarray) -> None:
    m, d = vectors.shape
    with open(path, "wb") as fh:
        fh.write(LDB_MAGIC)
        fh.write(struct.pack("<HHII", 1, 0, d, m))
        fh.write(encoder_id.encode().ljust(32, b"\0")[:32])
        fh.write(np.ascontiguousarray(h_nc, dtype="<f4").tobytes())
        for i in range(m):
            fh.write(struct.pack("<I", int(sample_ids[i])))
            fh.write(np.ascontiguousarray(positions[i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(normals[i], dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(vectors[i], dtype="<f4").tobytes())
            fh.write(struct.pack("<f", float(scores[i])))
