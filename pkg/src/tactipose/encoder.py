"""Latent encodings of tactile patches and the contact-compatibility test.

Candidate filtering only ever compares the scalar projection of a patch
encoding onto the no-contact anchor feature ``h_nc`` (the encoding of the
all-zero patch), so any encoder with a stable anchor works.  Two are
provided:

* the analytic encoder (default): a fixed 128-dim descriptor of the
  contact footprint, depth histogram and image moments, requiring no
  learned weights;
* an external CNN encoder evaluated with plain numpy from an ENCW weights
  file exported by the trainer.

Two features are *compatible* when their contact scores differ by less
than a threshold ``delta_h``; ``auto_delta_h`` picks that threshold as a
quantile of the score differences against a database.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from .sensor import TactilePatch

LATENT_DIM = 128
ANALYTIC_ENCODER_ID = "analytic-v1"

_N_RADIAL = 8
_N_ANGULAR = 8
_N_DEPTH_BINS = 32
_CONTACT_THRESHOLD = 0.05

# index of the depth-histogram bin that collects (near-)empty pixels; the
# no-contact anchor e_nc is the unit vector on this component
_NC_INDEX = _N_RADIAL * _N_ANGULAR


class EncoderMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LatentFeature:
    """Latent vector plus its scalar projection onto the no-contact anchor."""

    vector: np.ndarray
    contact_score: float
    encoder_id: str

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.vector, dtype=np.float32))
        v.flags.writeable = False
        object.__setattr__(self, "vector", v)
        object.__setattr__(self, "contact_score", float(self.contact_score))


def no_contact_anchor(dim: int = LATENT_DIM) -> np.ndarray:
    """e_nc: the documented unit vector the all-zero patch encodes to."""
    e = np.zeros(dim, dtype=np.float64)
    e[_NC_INDEX] = 1.0
    return e


class AnalyticEncoder:
    """Deterministic 128-dim patch descriptor (no learned weights).

    Layout: 64 radial-angular occupancy bins of the thresholded contact
    region (8 radii x 8 angles taken modulo pi, computed about the image
    center, so the descriptor's anchor projection is invariant to 180-degree
    patch rotations); 32 depth-histogram bins over all pixels (bin 0
    collects pixels below 1/32 depth, so an empty patch maps exactly to the
    anchor e_nc); 16 image moments (mask centroid, second moments,
    eccentricity, saturated and contact fractions, mean/max depth, zero
    padded); 16 reserved zeros.  The result is L2-normalized.
    """

    encoder_id = ANALYTIC_ENCODER_ID
    dim = LATENT_DIM

    @property
    def h_nc(self) -> np.ndarray:
        return no_contact_anchor()

    def encode(self, patch: TactilePatch) -> LatentFeature:
        f = analytic_descriptor(patch.depth)
        score = float(f @ self.h_nc)
        return LatentFeature(vector=f.astype(np.float32), contact_score=score,
                             encoder_id=self.encoder_id)


def analytic_descriptor(depth: np.ndarray) -> np.ndarray:
    nv, nu = depth.shape
    f = np.zeros(LATENT_DIM)

    u = ((np.arange(nu) + 0.5) / nu - 0.5) * 2.0
    v = ((np.arange(nv) + 0.5) / nv - 0.5) * 2.0
    uu, vv = np.meshgrid(u, v)
    mask = depth > _CONTACT_THRESHOLD
    n_px = depth.size

    if mask.any():
        um, vm = uu[mask], vv[mask]
        radius = np.sqrt(um * um + vm * vm) / np.sqrt(2.0)
        r_bin = np.minimum((radius * _N_RADIAL).astype(int), _N_RADIAL - 1)
        angle = np.arctan2(vm, um) % np.pi
        a_bin = np.minimum((angle / np.pi * _N_ANGULAR).astype(int), _N_ANGULAR - 1)
        occ = np.bincount(r_bin * _N_ANGULAR + a_bin,
                          minlength=_N_RADIAL * _N_ANGULAR)
        f[0:64] = occ / n_px

    d_bin = np.minimum((depth * _N_DEPTH_BINS).astype(int), _N_DEPTH_BINS - 1)
    f[64:96] = np.bincount(d_bin.ravel(), minlength=_N_DEPTH_BINS) / n_px

    if mask.any():
        um, vm = uu[mask], vv[mask]
        cu, cv = um.mean(), vm.mean()
        du, dv = um - cu, vm - cv
        var_u, var_v, cov = (du * du).mean(), (dv * dv).mean(), (du * dv).mean()
        tr = var_u + var_v
        det = var_u * var_v - cov * cov
        disc = max(0.0, tr * tr / 4.0 - det)
        lam1 = tr / 2.0 + np.sqrt(disc)
        lam2 = tr / 2.0 - np.sqrt(disc)
        ecc = np.sqrt(max(0.0, 1.0 - lam2 / lam1)) if lam1 > 1e-12 else 0.0
        contact = mask.mean()
        saturated = (depth >= 0.4).mean()
        f[96:106] = [cu, cv, np.sqrt(var_u), np.sqrt(var_v), cov, ecc,
                     saturated, contact, depth[mask].mean(), depth.max()]

    norm = np.linalg.norm(f)
    if norm < 1e-12:
        # unreachable: an all-zero patch still fills depth bin 0
        return no_contact_anchor()
    return f / norm


def encode_analytic(patch: TactilePatch) -> LatentFeature:
    return AnalyticEncoder().encode(patch)


# ---------------------------------------------------------------------------
# external CNN encoder (ENCW weights, numpy forward pass)

_ENCW_MAGIC = b"ENCW"
_ENCW_VERSION = 1

_CONV_TENSORS = [("conv1", 8), ("conv2", 16), ("conv3", 32), ("conv4", 64)]


@dataclass(frozen=True)
class EncoderWeights:
    """Named-tensor bundle for the convolutional encoder.

    Architecture is fixed: four 4x4 stride-2 pad-1 convolutions with
    channel plan 8-16-32-64 and ReLU, then a dense layer to the latent
    dimension.  Dense input is flattened channel-major (C, H, W).  The
    bundle also carries h_nc and a reference input/output pair so any
    implementation can self-check its forward pass.
    """

    tensors: dict
    encoder_id: str

    @property
    def dim(self) -> int:
        return int(self.tensors["fc.bias"].shape[0])

    @property
    def input_shape(self) -> tuple[int, int]:
        return tuple(self.tensors["reference_input"].shape)

    @property
    def h_nc(self) -> np.ndarray:
        return self.tensors["h_nc"].astype(np.float64)


def weights_content_id(tensors: dict) -> str:
    """Encoder id: sha256 over the canonical tensor stream (name-sorted)."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        h.update(name.encode())
        h.update(np.ascontiguousarray(tensors[name], dtype="<f4").tobytes())
    return h.hexdigest()[:32]


def save_encw(path, tensors: dict) -> str:
    """Write an ENCW file; returns the content-derived encoder id."""
    required = [f"{n}.weight" for n, _ in _CONV_TENSORS]
    required += [f"{n}.bias" for n, _ in _CONV_TENSORS]
    required += ["fc.weight", "fc.bias", "h_nc", "reference_input", "reference_output"]
    missing = [n for n in required if n not in tensors]
    if missing:
        raise ValueError(f"ENCW bundle missing tensors: {missing}")
    encoder_id = weights_content_id(tensors)
    with open(path, "wb") as fh:
        fh.write(_ENCW_MAGIC)
        fh.write(struct.pack("<HH", _ENCW_VERSION, len(tensors)))
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


def load_encw(path) -> EncoderWeights:
    with open(path, "rb") as fh:
        if fh.read(4) != _ENCW_MAGIC:
            raise ValueError(f"not an ENCW file: {path}")
        version, n_tensors = struct.unpack("<HH", fh.read(4))
        if version != _ENCW_VERSION:
            raise ValueError(f"unsupported ENCW version {version}")
        encoder_id = fh.read(32).rstrip(b"\0").decode()
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode()
            (ndim,) = struct.unpack("<H", fh.read(2))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            tensors[name] = data.astype(np.float32)
    return EncoderWeights(tensors=tensors, encoder_id=encoder_id)


def _conv2d_s2p1(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """4x4 stride-2 pad-1 convolution, NCHW single image, float32."""
    c_in, h, w = x.shape
    c_out = weight.shape[0]
    xp = np.zeros((c_in, h + 2, w + 2), dtype=np.float32)
    xp[:, 1:h + 1, 1:w + 1] = x
    h_out = (h + 2 - 4) // 2 + 1
    w_out = (w + 2 - 4) // 2 + 1
    # im2col over the 4x4 window
    cols = np.empty((c_in * 16, h_out * w_out), dtype=np.float32)
    k = 0
    for ci in range(c_in):
        for dy in range(4):
            for dx in range(4):
                patch = xp[ci, dy:dy + 2 * h_out:2, dx:dx + 2 * w_out:2]
                cols[k] = patch.reshape(-1)
                k += 1
    out = weight.reshape(c_out, -1).astype(np.float32) @ cols
    out += bias.astype(np.float32)[:, None]
    return out.reshape(c_out, h_out, w_out)


def encoder_forward(weights: EncoderWeights, depth: np.ndarray) -> np.ndarray:
    """Latent vector of a depth image under the bundled CNN weights."""
    x = np.ascontiguousarray(depth, dtype=np.float32)[None, :, :]
    for name, _ in _CONV_TENSORS:
        x = _conv2d_s2p1(x, weights.tensors[f"{name}.weight"],
                         weights.tensors[f"{name}.bias"])
        np.maximum(x, 0.0, out=x)
    flat = x.reshape(-1)  # channel-major (C, H, W)
    fc_w = weights.tensors["fc.weight"].astype(np.float32)
    fc_b = weights.tensors["fc.bias"].astype(np.float32)
    return fc_w @ flat + fc_b


def encode_external(patch: TactilePatch, weights: EncoderWeights) -> LatentFeature:
    if (patch.sensor.pixels_v, patch.sensor.pixels_u) != weights.input_shape:
        raise EncoderMismatch(
            f"encoder mismatch: patch is {patch.depth.shape}, weights expect "
            f"{weights.input_shape}")
    vec = encoder_forward(weights, patch.depth)
    score = float(vec.astype(np.float64) @ weights.h_nc)
    return LatentFeature(vector=vec, contact_score=score,
                         encoder_id=weights.encoder_id)


class ExternalEncoder:
    def __init__(self, weights: EncoderWeights):
        self.weights = weights
        self.encoder_id = weights.encoder_id
        self.dim = weights.dim

    @property
    def h_nc(self) -> np.ndarray:
        return self.weights.h_nc

    def encode(self, patch: TactilePatch) -> LatentFeature:
        return encode_external(patch, self.weights)

    def self_check(self, atol: float = 1e-4) -> bool:
        """Reproduce the bundled reference vector within tolerance."""
        ref_in = self.weights.tensors["reference_input"].astype(np.float64)
        ref_out = self.weights.tensors["reference_output"].astype(np.float64)
        got = encoder_forward(self.weights, ref_in).astype(np.float64)
        return bool(np.max(np.abs(got - ref_out)) < atol)


# ---------------------------------------------------------------------------
# compatibility predicate (the selection criterion)


def compatible(query: LatentFeature, candidate: LatentFeature,
               delta_h: float) -> bool:
    """True when the two contact scores differ by less than ``delta_h``."""
    if query.encoder_id != candidate.encoder_id:
        raise EncoderMismatch(
            f"encoder mismatch: {query.encoder_id!r} vs {candidate.encoder_id!r}")
    if delta_h <= 0:
        raise ValueError("delta_h must be positive")
    return abs(candidate.contact_score - query.contact_score) < delta_h


_DELTA_H_FLOOR = 1e-6  # keeps exact-duplicate scores selectable


def cosine_distances(db, query: LatentFeature) -> np.ndarray:
    """1 - cosine similarity between the query vector and every database
    entry (the optional richer metric; the default criterion compares only
    contact scores)."""
    q = np.asarray(query.vector, dtype=np.float64)
    q_norm = np.linalg.norm(q)
    vecs = np.asarray(db.vectors, dtype=np.float64)
    norms = np.linalg.norm(vecs, axis=1)
    sim = (vecs @ q) / np.maximum(norms * q_norm, 1e-300)
    return 1.0 - sim


def auto_delta_h(db, query: LatentFeature, quantile: float = 0.10,
                 cosine: bool = False) -> float:
    """Score-difference quantile of the database against ``query``.

    Uses the plain order statistic (inverted CDF), floored at 1e-6 so a
    database with many identical scores still yields a usable threshold.
    With ``cosine`` the quantile is taken over cosine distances instead.
    """
    if not 0.0 < quantile <= 1.0:
        raise ValueError("quantile must lie in (0, 1]")
    scores = np.asarray(db.contact_scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty database")
    if cosine:
        diffs = cosine_distances(db, query)
    else:
        diffs = np.abs(scores - query.contact_score)
    value = float(np.quantile(diffs, quantile, method="inverted_cdf"))
    # nudge above the order statistic so entries exactly at it still pass
    # the strict comparison (score ties are common on flat regions)
    return max(float(np.nextafter(value, np.inf)), _DELTA_H_FLOOR)
