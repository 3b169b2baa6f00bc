"""Candidate tuples and distance-based pruning.

A candidate tuple assigns every sensor a database surface position; the
candidate set is the Cartesian product of the per-sensor compatible sets
and is never materialized.  Pruning keeps tuples whose object-frame
pairwise distances match the sensors' world pairwise distances: the
threshold starts at ``delta_d0`` and is multiplied by ``shrink`` until at
most ``n_max`` tuples remain.

The streaming implementation reproduces that schedule exactly in one
pass: it histograms every tuple's cost against the fixed threshold
ladder (so the final threshold is known at the end) while retaining, in
bounded memory, only tuples that can still pass the provisionally
smallest viable threshold.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .database import LatentDatabase
from .se3 import Pose
from .sensor import TactilePatch


@dataclass(frozen=True)
class SensorObservation:
    """World pose of one sensor plus its tactile image."""

    pose: Pose
    patch: TactilePatch

    @property
    def s(self) -> np.ndarray:
        """Translational part of the sensor pose (world frame, meters)."""
        return self.pose.translation


@dataclass(frozen=True)
class CandidateTuple:
    """One hypothesized assignment of all L sensors to surface positions."""

    sample_refs: tuple
    positions: np.ndarray  # (L, 3) object frame
    pairwise_cost: float = 0.0
    stream_index: int = field(default=-1, compare=False)


def pairwise_cost(candidate_positions, sensor_positions) -> float:
    """Mean pairwise-distance mismatch between tuple and sensors (meters)."""
    t = np.asarray(candidate_positions, dtype=float)
    s = np.asarray(sensor_positions, dtype=float)
    n = len(s)
    if n < 2:
        return 0.0
    total = 0.0
    for i in range(n - 1):
        for k in range(i + 1, n):
            total += abs(np.linalg.norm(s[i] - s[k]) - np.linalg.norm(t[i] - t[k]))
    return 2.0 * total / (n * (n - 1))


class TupleStream:
    """Lazy lexicographic enumeration of Omega_1 x ... x Omega_L.

    Iterating yields :class:`CandidateTuple` objects one at a time; the
    pruning fast path instead reads the factor structure directly and
    never builds per-tuple objects.
    """

    def __init__(self, omegas, db: LatentDatabase):
        if len(omegas) < 1:
            raise ValueError("need at least one compatible set")
        self.omegas = [np.sort(np.asarray(o, dtype=np.int64)) for o in omegas]
        for i, o in enumerate(self.omegas):
            if o.size == 0:
                raise ValueError(f"compatible set {i} is empty")
        self.db = db
        id_to_row = {int(s): r for r, s in enumerate(db.sample_ids)}
        self._rows = [np.array([id_to_row[int(s)] for s in o], dtype=np.int64)
                      for o in self.omegas]

    @property
    def n_sensors(self) -> int:
        return len(self.omegas)

    def __len__(self) -> int:
        n = 1
        for o in self.omegas:
            n *= len(o)
        return n

    def factor_positions(self) -> list[np.ndarray]:
        return [self.db.positions[rows] for rows in self._rows]

    def tuple_at(self, linear_index: int) -> CandidateTuple:
        sizes = [len(o) for o in self.omegas]
        idx = np.unravel_index(linear_index, sizes)
        refs = tuple(int(self.omegas[i][idx[i]]) for i in range(len(sizes)))
        pos = np.stack([self.db.positions[self._rows[i][idx[i]]]
                        for i in range(len(sizes))])
        return CandidateTuple(sample_refs=refs, positions=pos,
                              stream_index=int(linear_index))

    def __iter__(self):
        sizes = [len(o) for o in self.omegas]
        for n, multi in enumerate(itertools.product(*[range(s) for s in sizes])):
            refs = tuple(int(self.omegas[i][multi[i]]) for i in range(len(sizes)))
            pos = np.stack([self.db.positions[self._rows[i][multi[i]]]
                            for i in range(len(sizes))])
            yield CandidateTuple(sample_refs=refs, positions=pos, stream_index=n)


def make_tuples(omegas, db: LatentDatabase) -> TupleStream:
    """Candidate tuples as the lazy Cartesian product of the Omega sets."""
    return TupleStream(omegas, db)


# ---------------------------------------------------------------------------
# threshold-schedule pruning

_R_CAP = 64  # threshold ladder length; delta_d0 * shrink**63 is ~nm scale


class NoConsistentTuples(ValueError):
    pass


class _ScheduleAccumulator:
    """Single-pass state for the shrink schedule.

    ``hist[g]`` counts tuples passed by exactly the g largest thresholds
    (g = 0 means the tuple already fails delta_d0).  The smallest viable
    round index can only grow as tuples stream in, so anything at or above
    its threshold can be discarded immediately.
    """

    def __init__(self, n_max: int, delta_d0: float, shrink: float):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        if not 0.0 < shrink < 1.0:
            raise ValueError("shrink must lie in (0, 1)")
        if delta_d0 <= 0.0:
            raise ValueError("delta_d0 must be positive")
        self.n_max = n_max
        self.thresholds = delta_d0 * shrink ** np.arange(_R_CAP)  # descending
        self._thr_asc = self.thresholds[::-1].copy()
        self.hist = np.zeros(_R_CAP + 1, dtype=np.int64)
        self._costs = []
        self._indices = []
        self._buffer_cap = max(4 * n_max, 4096)
        self._retained = 0

    def _n_greater(self, costs: np.ndarray) -> np.ndarray:
        """Per cost, how many thresholds are strictly greater than it."""
        return _R_CAP - np.searchsorted(self._thr_asc, costs, side="right")

    def r_lower(self) -> int:
        """Smallest round index that currently passes at most n_max tuples."""
        passed = np.cumsum(self.hist[::-1])[::-1]  # passed[g] = count(n_greater >= g)
        for r in range(_R_CAP):
            if passed[r + 1] <= self.n_max:
                return r
        return _R_CAP - 1

    def add(self, costs: np.ndarray, indices: np.ndarray) -> None:
        greater = self._n_greater(costs)
        self.hist += np.bincount(greater, minlength=_R_CAP + 1)
        keep = costs < self.thresholds[self.r_lower()]
        if keep.any():
            self._costs.append(costs[keep])
            self._indices.append(indices[keep])
            self._retained += int(keep.sum())
            if self._retained > self._buffer_cap:
                self._compact()

    def _compact(self) -> None:
        costs = np.concatenate(self._costs)
        indices = np.concatenate(self._indices)
        keep = costs < self.thresholds[self.r_lower()]
        self._costs = [costs[keep]]
        self._indices = [indices[keep]]
        self._retained = int(keep.sum())

    def finish(self):
        """(final costs, final stream indices) sorted by (cost, index)."""
        if self.hist[1:].sum() == 0:
            raise NoConsistentTuples("no geometrically consistent tuples")
        r = self.r_lower()
        costs = np.concatenate(self._costs) if self._costs else np.empty(0)
        indices = (np.concatenate(self._indices) if self._indices
                   else np.empty(0, dtype=np.int64))
        keep = costs < self.thresholds[r]
        costs, indices = costs[keep], indices[keep]
        if len(costs) > self.n_max:
            # ladder exhausted with ties at the bottom; fall back to the
            # n_max lowest-cost tuples in stream order
            order = np.lexsort((indices, costs))[: self.n_max]
            costs, indices = costs[order], indices[order]
        order = np.lexsort((indices, costs))
        return costs[order], indices[order]


def filter_by_distance(tuples, observations, n_max: int,
                       delta_d0: float = 0.05,
                       shrink: float = 0.8) -> list[CandidateTuple]:
    """Prune candidate tuples whose pairwise geometry contradicts the
    sensors' world positions.

    Returns the surviving tuples sorted by ascending cost (ties broken by
    stream order), at most ``n_max`` of them.  With a single sensor the
    criterion is vacuous and the first ``n_max`` tuples pass through.
    Raises :class:`NoConsistentTuples` when nothing passes ``delta_d0``.
    """
    sensor_positions = np.stack([o.s for o in observations])
    n_sensors = len(sensor_positions)

    if isinstance(tuples, TupleStream) and tuples.n_sensors != n_sensors:
        raise ValueError("observation count does not match the tuple stream")

    if n_sensors == 1:
        out = []
        for t in itertools.islice(iter(tuples), n_max):
            out.append(t)
        if not out:
            raise NoConsistentTuples("no geometrically consistent tuples")
        return out

    acc = _ScheduleAccumulator(n_max, delta_d0, shrink)
    if isinstance(tuples, TupleStream):
        _scan_stream(tuples, sensor_positions, acc)
        costs, indices = acc.finish()
        out = []
        for c, idx in zip(costs, indices):
            t = tuples.tuple_at(int(idx))
            out.append(CandidateTuple(sample_refs=t.sample_refs,
                                      positions=t.positions,
                                      pairwise_cost=float(c),
                                      stream_index=t.stream_index))
        return out

    # generic iterable of CandidateTuple
    kept: dict[int, tuple] = {}
    chunk_tuples: list[CandidateTuple] = []

    def flush():
        if not chunk_tuples:
            return
        pos = np.stack([t.positions for t in chunk_tuples])
        idx = np.arange(len(chunk_tuples)) + flush.base
        costs = _batch_costs(pos, sensor_positions)
        acc.add(costs, idx)
        thr = acc.thresholds[acc.r_lower()]
        for t, c, i in zip(chunk_tuples, costs, idx):
            if c < thr:
                kept[int(i)] = (t, float(c))
        if len(kept) > 4 * acc._buffer_cap:
            for i in [i for i, (_, c) in kept.items() if c >= thr]:
                del kept[i]
        flush.base += len(chunk_tuples)
        chunk_tuples.clear()

    flush.base = 0
    for t in tuples:
        chunk_tuples.append(t)
        if len(chunk_tuples) >= 8192:
            flush()
    flush()
    costs, indices = acc.finish()
    out = []
    for c, idx in zip(costs, indices):
        t, _ = kept[int(idx)]
        out.append(CandidateTuple(sample_refs=t.sample_refs, positions=t.positions,
                                  pairwise_cost=float(c), stream_index=int(idx)))
    return out


def _batch_costs(positions: np.ndarray, sensor_positions: np.ndarray) -> np.ndarray:
    """Costs for an (N, L, 3) batch of tuple positions."""
    n_sensors = len(sensor_positions)
    total = np.zeros(len(positions))
    for i in range(n_sensors - 1):
        for k in range(i + 1, n_sensors):
            d_w = np.linalg.norm(sensor_positions[i] - sensor_positions[k])
            d_t = np.linalg.norm(positions[:, i] - positions[:, k], axis=1)
            total += np.abs(d_w - d_t)
    return 2.0 * total / (n_sensors * (n_sensors - 1))


def _scan_stream(stream: TupleStream, sensor_positions: np.ndarray,
                 acc: _ScheduleAccumulator) -> None:
    """Factorized cost evaluation over the whole product, lexicographic."""
    factors = stream.factor_positions()
    n_sensors = len(factors)
    sizes = [len(f) for f in factors]
    norm = 2.0 / (n_sensors * (n_sensors - 1))
    # a single pair term this large already forces cost >= delta_d0
    prune_bound = acc.thresholds[0] / norm

    d_w = {}
    d_pair = {}
    for i in range(n_sensors - 1):
        for k in range(i + 1, n_sensors):
            d_w[i, k] = np.linalg.norm(sensor_positions[i] - sensor_positions[k])
            diff = factors[i][:, None, :] - factors[k][None, :, :]
            d_pair[i, k] = np.abs(d_w[i, k] - np.linalg.norm(diff, axis=2))

    if n_sensors == 2:
        cost = norm * d_pair[0, 1]
        flat = cost.reshape(-1)
        acc.add(flat, np.arange(flat.size, dtype=np.int64))
        return

    if n_sensors == 3:
        t23 = d_pair[1, 2]
        n2, n3 = sizes[1], sizes[2]
        for a in range(sizes[0]):
            t12 = d_pair[0, 1][a]
            t13 = d_pair[0, 2][a]
            keep_b = np.flatnonzero(t12 < prune_bound)
            keep_c = np.flatnonzero(t13 < prune_bound)
            if keep_b.size == 0 or keep_c.size == 0:
                continue
            block = (t12[keep_b][:, None] + t13[keep_c][None, :]
                     + t23[np.ix_(keep_b, keep_c)])
            cost = norm * block
            mask = cost < acc.thresholds[0]
            if not mask.any():
                continue
            bb, cc = np.nonzero(mask)
            lin = (a * n2 + keep_b[bb]) * n3 + keep_c[cc]
            acc.add(cost[bb, cc], lin.astype(np.int64))
        return

    # generic L >= 4: chunked linear enumeration
    total = 1
    for s in sizes:
        total *= s
    chunk = 65536
    for start in range(0, total, chunk):
        lin = np.arange(start, min(start + chunk, total), dtype=np.int64)
        multi = np.unravel_index(lin, sizes)
        pos = np.stack([factors[i][multi[i]] for i in range(n_sensors)], axis=1)
        acc.add(_batch_costs(pos, sensor_positions), lin)
